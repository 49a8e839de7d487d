import json

import numpy as np
import pytest

from conftest import core_sup, line
from scalecalc.errors import GridMismatchError, OffGridError, PaddingError
from scalecalc.expr import ClosedForm
from scalecalc.gridfn import Grid, Polynomial, Trig, Weierstrass, constant, evaluate, sample
from scalecalc.scale_ops import (DERIVED_EXACT, PAPER_PRINTED, ScaleParams, a_coeff,
                                 composite_expansion_residual, conj_scale_derivative,
                                 delta_minus, delta_plus, epsilon_mean, integral_identity_check,
                                 leibniz, leibniz_correction, scale_derivative, trapezoid)


def kink_grid():
    g = Grid.over(-1.0, 1.0, 0.05, n_pad=4)
    return g, evaluate(lambda t: np.abs(t), g)


def test_scale_params_validation():
    with pytest.raises(ValueError):
        ScaleParams(0)
    with pytest.raises(ValueError):
        ScaleParams(1.5)
    assert ScaleParams(3).eps(Grid.over(0, 1, 0.25)) == 0.75


def test_quotients_of_t_squared(coarse_grid):
    f = sample(Polynomial((0, 0, 1)), coarse_grid)
    assert abs(delta_plus(f, 2)(1.0) - 2.1) < 1e-12
    assert abs(delta_minus(f, 2)(1.0) - 1.9) < 1e-12


def test_box_of_t_squared(coarse_grid):
    f = sample(Polynomial((0, 0, 1)), coarse_grid)
    t = coarse_grid.core_nodes
    np.testing.assert_allclose(scale_derivative(f, 2).core(), 2 * t - 0.1j, atol=1e-12)
    np.testing.assert_allclose(conj_scale_derivative(f, 2).core(), 2 * t + 0.1j, atol=1e-12)


def test_constant_and_linear(coarse_grid):
    c = constant(coarse_grid, 4.0 - 1j)
    for op in (delta_plus, delta_minus, scale_derivative, conj_scale_derivative):
        assert core_sup(op(c, 2)) == 0.0
        np.testing.assert_allclose(op(line(coarse_grid), 2).core(), 1.0, atol=1e-12)


def test_kink_at_zero():
    g, f = kink_grid()
    assert abs(delta_plus(f, 2)(0.0) - 1) < 1e-12
    assert abs(delta_minus(f, 2)(0.0) + 1) < 1e-12
    assert abs(scale_derivative(f, 2)(0.0) - (-1j)) < 1e-12
    assert abs(conj_scale_derivative(f, 2)(0.0) - 1j) < 1e-12


def test_complex_split():
    # box acts on real and imaginary parts separately
    g = Grid.over(-1.0, 1.0, 0.05, n_pad=4)
    f = evaluate(lambda t: np.abs(t) + 1j * t ** 2, g)
    re, im = evaluate(lambda t: np.abs(t), g), evaluate(lambda t: t ** 2, g)
    expect = scale_derivative(re, 2) + 1j * scale_derivative(im, 2)
    np.testing.assert_array_equal(scale_derivative(f, 2).core(), expect.core())
    expect_c = conj_scale_derivative(re, 2) + 1j * conj_scale_derivative(im, 2)
    np.testing.assert_array_equal(conj_scale_derivative(f, 2).core(), expect_c.core())


def test_insufficient_padding(coarse_grid):
    f = line(coarse_grid)
    with pytest.raises(PaddingError):
        scale_derivative(f, 5)


def test_epsilon_means(coarse_grid):
    t = coarse_grid.core_nodes
    f = line(coarse_grid)
    np.testing.assert_allclose(epsilon_mean(f, 2, "+").core(), t + 0.05, atol=1e-12)
    np.testing.assert_allclose(epsilon_mean(f, 2, "-").core(), t - 0.05, atol=1e-12)
    np.testing.assert_allclose(epsilon_mean(constant(coarse_grid, 3.0), 2, "+").core(), 3.0)
    with pytest.raises(ValueError):
        epsilon_mean(f, 2, "x")


def test_leibniz_t_t(coarse_grid):
    f = line(coarse_grid)
    d = leibniz(f, f, 2, DERIVED_EXACT)
    p = leibniz(f, f, 2, PAPER_PRINTED)
    np.testing.assert_allclose(d.correction.core(), -0.1j, atol=1e-12)
    np.testing.assert_allclose(p.correction.core(), -0.2j, atol=1e-12)
    assert d.residual_max <= 1e-12
    assert abs(p.residual_max - 0.1) < 1e-12


def test_leibniz_constant_factor(coarse_grid):
    f = sample(Trig(1.0, 3.0, 0.2), coarse_grid)
    c = constant(coarse_grid, 2.5)
    for v in (DERIVED_EXACT, PAPER_PRINTED):
        assert core_sup(leibniz_correction(f, c, 2, v)) == 0.0
        assert leibniz(f, c, 2, v).residual_max <= 1e-12


def test_leibniz_on_nonsmooth_complex_pair():
    g = Grid.over(-1.0, 1.0, 1e-4, n_pad=8)
    f = sample(Weierstrass(0.5, 3), g) * (1 + 0.5j)
    h = evaluate(lambda t: np.abs(t) - 2j * t ** 3, g)
    for k in (1, 3, 8):
        assert leibniz(f, h, k).relative_residual <= 1e-12


def test_leibniz_errors(coarse_grid):
    other = Grid.over(0.0, 1.0, 0.1, n_pad=4)
    with pytest.raises(GridMismatchError):
        leibniz(line(coarse_grid), line(other), 1)
    with pytest.raises(ValueError):
        leibniz_correction(line(coarse_grid), line(coarse_grid), 1, "other")


def test_leibniz_report_json(coarse_grid):
    d = json.loads(json.dumps(leibniz(line(coarse_grid), line(coarse_grid), 2).to_dict()))
    assert d["variant"] == DERIVED_EXACT and d["residual_max"] <= 1e-12


def test_integral_identity_linear_and_constant(coarse_grid):
    r = integral_identity_check(line(coarse_grid), 2, 0.0, 1.0)
    assert abs(r.lhs - 1) < 1e-12 and abs(r.rhs - 1) < 1e-12
    c = integral_identity_check(constant(coarse_grid, 2.0), 2, 0.0, 1.0)
    assert abs(c.lhs) < 1e-12 and abs(c.rhs) < 1e-12


def test_integral_identity_with_quadrature_reference(coarse_grid):
    r = integral_identity_check(line(coarse_grid), 2, 0.0, 1.0, reference=Polynomial((0, 1)))
    assert r.means == "quadrature" and r.gap <= 1e-12


def test_integral_identity_t_squared_within_h_squared():
    # box(t^2) = 2t - i eps is linear, so the trapezoid error vanishes
    for h in (2.0 ** -5, 2.0 ** -8):
        g = Grid.over(0.0, 1.0, h, n_pad=8)
        r = integral_identity_check(sample(Polynomial((0, 0, 1)), g), 4, 0.0, 1.0,
                                    reference=Polynomial((0, 0, 1)))
        assert r.gap <= h ** 2


def test_integral_identity_trig_order_under_refinement():
    fn = Trig(1.0, 3.0, 0.2)
    gaps, hs = [], [2.0 ** -j for j in range(5, 10)]
    for h in hs:
        g = Grid.over(0.0, 1.0, h, n_pad=8)
        gaps.append(integral_identity_check(sample(fn, g), 4, 0.0, 1.0, reference=fn).gap)
    slope = np.polyfit(np.log(hs), np.log(gaps), 1)[0]
    assert slope >= 1.9


def test_integral_identity_off_grid(coarse_grid):
    with pytest.raises(OffGridError):
        integral_identity_check(line(coarse_grid), 2, 0.02, 1.0)


def test_trapezoid_orientation(coarse_grid):
    f = line(coarse_grid)
    assert abs(trapezoid(f, 0.0, 1.0) - 0.5) < 1e-12
    assert abs(trapezoid(f, 1.0, 0.0) + 0.5) < 1e-12


def test_a_coeff_examples(coarse_grid):
    x = line(coarse_grid)
    np.testing.assert_allclose(a_coeff(x, 2, 1).core(), 1.0, atol=1e-12)
    np.testing.assert_allclose(a_coeff(x, 2, 2).core(), -1j, atol=1e-12)
    for j in (1, 2, 3):
        assert core_sup(a_coeff(constant(coarse_grid, 1.0), 2, j)) == 0.0
    with pytest.raises(ValueError):
        a_coeff(x, 2, 0)


def test_a_coeff_one_is_box(coarse_grid):
    x = sample(Trig(1.0, 4.0, 0.3), coarse_grid)
    np.testing.assert_allclose(a_coeff(x, 2, 1).core(), scale_derivative(x, 2).core(), atol=1e-12)


def test_composite_expansion_exact_cases():
    g = Grid.over(0.0, 1.0, 2.0 ** -8, n_pad=64)
    x = sample(Weierstrass(0.5, 3), g)
    ks = [1, 2, 4, 8, 16]
    assert composite_expansion_residual(ClosedForm("x", ("t", "x")), x, ks, 1).exact
    assert composite_expansion_residual(ClosedForm("t", ("t", "x")), x, ks, 1).exact


def test_composite_expansion_weierstrass_square():
    g = Grid.over(0.0, 1.0, 1e-4, n_pad=1024)
    x = sample(Weierstrass(0.5, 3), g)
    fit = composite_expansion_residual(ClosedForm("x**2", ("t", "x")), x, [8, 16, 32, 64, 128, 256], 2)
    assert fit.threshold == 0.5
    assert fit.passed


def test_composite_expansion_short_ladder(coarse_grid):
    with pytest.raises(ValueError):
        composite_expansion_residual(ClosedForm("x", ("t", "x")), line(coarse_grid), [1, 2], 1)
