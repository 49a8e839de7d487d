import warnings

import numpy as np
import pytest

from conftest import core_sup, line
from scalecalc.control import (ControlGenerator, ControlSystem, PontryaginTriple, hamiltonian,
                               hamiltonian_noether_constant, invariance_residual,
                               pontryagin_residuals, reduction_check)
from scalecalc.errors import GridMismatchError, PaddingError
from scalecalc.gridfn import Cosh, Grid, Polynomial, Trig, constant, evaluate, sample
from scalecalc.scale_ops import scale_derivative
from scalecalc.variational import ExtremalWarning, Generator, Lagrangian, noether_constant

FREE_SYS = ControlSystem.from_expressions("u**2/2", "u")


def free_triple(grid, p=-3.0):
    return PontryaginTriple(line(grid, 3.0), constant(grid, 3.0), constant(grid, p))


def test_hamiltonian_examples():
    H = hamiltonian(FREE_SYS)
    assert H(0.0, 0.0, 2.0, 5.0) == pytest.approx(2.0 + 10.0)
    zero = hamiltonian(ControlSystem.from_expressions("0", "0"))
    assert zero(0.3, 1.0, 2.0, 5.0) == 0
    H = hamiltonian(ControlSystem.from_expressions("u**2/2 + q**2/2", "u"))
    args = (0.1, 0.7, 1.3, -0.4)
    assert H.d2(*args) == pytest.approx(0.7)
    assert H.d3(*args) == pytest.approx(1.3 - 0.4)
    assert H.d4(*args) == pytest.approx(1.3)


def test_phi_partials_validated():
    L = Lagrangian.from_expression("u**2/2", variables=("t", "q", "u"))
    with pytest.raises(ValueError, match="phi"):
        ControlSystem(L, lambda t, q, u: q * u, lambda t, q, u: 0 * u,
                      lambda t, q, u: 0 * u, lambda t, q, u: q + 0 * u)


def test_free_particle_triple_is_extremal(dyadic_grid):
    sups = pontryagin_residuals(FREE_SYS, free_triple(dyadic_grid), 4).sup()
    assert max(sups.values()) <= 1e-12


def test_zero_triple(dyadic_grid):
    z = constant(dyadic_grid, 0.0)
    sups = pontryagin_residuals(FREE_SYS, PontryaginTriple(z, z, z), 4).sup()
    assert max(sups.values()) == 0.0


def test_wrong_costate_is_not_extremal(dyadic_grid):
    res = pontryagin_residuals(FREE_SYS, free_triple(dyadic_grid, p=0.0), 4)
    np.testing.assert_allclose(res.stationary.core(), 3.0)


def test_state_residual_is_control_system(dyadic_grid):
    sys_ = ControlSystem.from_expressions("u**2/2 + q*t", "sin(q) + t*u")
    q = sample(Trig(1.0, 2.0, 0.1), dyadic_grid)
    u = sample(Cosh(0.5, 1.0), dyadic_grid) * (1 + 0.2j)
    p = sample(Polynomial((1.0, -2.0)), dyadic_grid)
    res = pontryagin_residuals(sys_, PontryaginTriple(q, u, p), 4)
    direct = scale_derivative(q, 4) - evaluate(sys_.phi, dyadic_grid, q, u)
    assert core_sup(res.state - direct) == 0.0


def test_triple_validation(dyadic_grid):
    other = Grid.over(0.0, 1.0, 0.125, n_pad=4)
    with pytest.raises(GridMismatchError):
        PontryaginTriple(line(dyadic_grid), line(other), line(dyadic_grid))
    with pytest.raises(ValueError):
        PontryaginTriple(line(dyadic_grid) * 1j, line(dyadic_grid), line(dyadic_grid))


def test_padding_error():
    g = Grid.over(0.0, 1.0, 0.125, n_pad=1)
    with pytest.raises(PaddingError):
        pontryagin_residuals(FREE_SYS, free_triple(g), 2)


@pytest.mark.parametrize("expr,fn", [("v**2/2", Polynomial((0, 1))),
                                     ("v**2/2 + q**2/2", Cosh()),
                                     ("t*v", Polynomial((0, 0, 1)))])
def test_reduction_gap(dyadic_grid, expr, fn):
    rep = reduction_check(Lagrangian.from_expression(expr), sample(fn, dyadic_grid), 4)
    assert rep.el_equiv_gap <= 1e-12


def test_reduction_oscillator_residual_is_order_eps(dyadic_grid):
    rep = reduction_check(Lagrangian.from_expression("v**2/2 + q**2/2"), sample(Cosh(), dyadic_grid), 4)
    assert 0 < core_sup(rep.el) < 10 * 4 * dyadic_grid.h


def test_hamiltonian_noether_free(dyadic_grid):
    tr = free_triple(dyadic_grid)
    e = hamiltonian_noether_constant(FREE_SYS, tr, ControlGenerator.from_expressions(1, 0), 4)
    m = hamiltonian_noether_constant(FREE_SYS, tr, ControlGenerator.from_expressions(0, 1), 4)
    assert e.initial == -4.5 and e.max_drift <= 1e-12
    assert m.initial == 3.0 and m.max_drift <= 1e-12


def test_hamiltonian_noether_zero_triple(dyadic_grid):
    z = constant(dyadic_grid, 0.0)
    rep = hamiltonian_noether_constant(FREE_SYS, PontryaginTriple(z, z, z),
                                       ControlGenerator.from_expressions("t+q", "u*p+1"), 4)
    assert core_sup(rep.series) == 0.0


def test_hamiltonian_noether_warns_off_extremal(dyadic_grid):
    with pytest.warns(ExtremalWarning):
        hamiltonian_noether_constant(FREE_SYS, free_triple(dyadic_grid, p=0.0),
                                     ControlGenerator.from_expressions(1, 0), 4)


def test_hamiltonian_and_lagrangian_noether_agree(dyadic_grid):
    L = Lagrangian.from_expression("v**2/2 + q**2/2")
    q = sample(Cosh(), dyadic_grid)
    red = reduction_check(L, q, 4)
    u = scale_derivative(q, 4)
    tr = PontryaginTriple(q, u, red.p_defined)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtremalWarning)
        for tau, xi in (("1", "0"), ("0", "1"), ("t", "q")):
            ch = hamiltonian_noether_constant(ControlSystem.reduced(L), tr,
                                              ControlGenerator.from_expressions(tau, xi), 4)
            cl = noether_constant(L, q, Generator.from_expressions(tau, xi), 4)
            assert core_sup(ch.series - cl.series) <= 1e-12


def test_hamiltonian_noether_linear_in_generator(dyadic_grid):
    tr = free_triple(dyadic_grid)
    g1 = ControlGenerator.from_expressions("1+t", "q")
    g2 = ControlGenerator.from_expressions("u", "p*t")
    c1 = hamiltonian_noether_constant(FREE_SYS, tr, g1, 4).series
    c2 = hamiltonian_noether_constant(FREE_SYS, tr, g2, 4).series
    c = hamiltonian_noether_constant(FREE_SYS, tr, g1.combine(1.5, g2, -2j), 4).series
    assert core_sup(c - (1.5 * c1 - 2j * c2)) <= 1e-12 * core_sup(c)


def test_control_invariance_time_translation(dyadic_grid):
    vals = invariance_residual(FREE_SYS, free_triple(dyadic_grid),
                               ControlGenerator.from_expressions(1, 0), 4, [(0.0, 0.5), (0.5, 1.0)])
    assert max(abs(v) for v in vals) <= 1e-12


def test_system_from_dict():
    s = ControlSystem.from_dict({"lagrangian": "u**2/2 + q", "phi": "u + t", "K": 2.0})
    assert s.K == 2.0 and s.phi(1.0, 0.0, 2.0) == 3.0
