"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` to see the summary lines.
"""

import json
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import subspace_angles

from scalecalc import cli
from scalecalc.control import (ControlGenerator, ControlSystem, PontryaginTriple, hamiltonian_noether_constant,
                               pontryagin_residuals, reduction_check)
from scalecalc.convergence import fit_order, ladder_fit
from scalecalc.gridfn import (Cosh, Exponential, Gaussian, Grid, PlanePhase, Polynomial, Trig, Weierstrass,
                              evaluate, sample)
from scalecalc.regularity import holder_estimate, lemma_scaling_check
from scalecalc.scale_ops import (DERIVED_EXACT, PAPER_PRINTED, a_coeff, integral_identity_check, leibniz,
                                 scale_derivative)
from scalecalc.schrodinger import (HarmonicEigenstate, PlaneWave, ProbeGrid, SchrodingerParams, a_eps,
                                   constant_ex2, linear_pde_residual, sample_path)
from scalecalc.variational import (Generator, Lagrangian, dbr_residual, el_residual, noether_constant,
                                   symmetry_search)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
DYADIC = Grid.over(0.0, 1.0, 2.0 ** -10, n_pad=64)
LADDER = [1, 2, 4, 8, 16, 32]
FREE = Lagrangian.from_expression("v**2/2")
OSC = Lagrangian.from_expression("v**2/2 + q**2/2")


@pytest.fixture
def verdict(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
        assert ok, detail
    return emit


def sup(f):
    return float(np.max(np.abs(f.core())))


def random_catalog(rng):
    kind = rng.integers(7)
    a, b = rng.uniform(0.3, 2.0), rng.uniform(-1.0, 1.0)
    if kind == 0:
        return Polynomial(tuple(rng.uniform(-2, 2, rng.integers(1, 5))))
    if kind == 1:
        return Trig(a, rng.uniform(0.5, 8.0), b)
    if kind == 2:
        return Exponential(b, a)
    if kind == 3:
        return Cosh(a, b)
    if kind == 4:
        return Gaussian(0.5 + b / 3, a / 5 + 0.05, a)
    if kind == 5:
        return PlanePhase(a, b)
    return Weierstrass(rng.uniform(0.3, 0.8), int(rng.choice([3, 5, 7])))


def test_criterion_1_leibniz(verdict):
    rng = np.random.default_rng(20240901)
    g = Grid.over(0.0, 1.0, 1e-3, n_pad=64)
    worst = 0.0
    for _ in range(20):
        f, h = sample(random_catalog(rng), g), sample(random_catalog(rng), g)
        for k in (1, 3, 8, 20, 64):
            worst = max(worst, leibniz(f, h, k, DERIVED_EXACT).relative_residual)
    coarse = Grid.over(0.0, 1.0, 0.05, n_pad=4)
    t = sample(Polynomial((0.0, 1.0)), coarse)
    printed = leibniz(t, t, 2, PAPER_PRINTED)
    residual = (printed.lhs - printed.main_terms - printed.correction).core()
    ok = worst <= 1e-12 and np.allclose(np.abs(residual), 0.1, atol=1e-12, rtol=0)
    verdict(1, ok, f"derived_exact worst relative residual {worst:.2e} over 20 pairs x 5 eps; "
                   f"paper_printed |residual| on f=g=t is {printed.residual_max:.6g} at eps=0.1")


C2_FUNCTIONS = [Polynomial((0.0, 0.0, 1.0)), Polynomial((1.0, -2.0, 0.5, 0.3)), Trig(1.0, 1.0, 0.0),
                Trig(0.5, 3.0, 0.2), Exponential(1.0, 1.0), Exponential(2.0, -0.5), Cosh(1.0, 1.0),
                Cosh(0.5, 2.0), Gaussian(0.5, 0.3, 1.0), PlanePhase(2.0, 0.5)]


def test_criterion_2_classical_limit(verdict):
    orders = []
    for fn in C2_FUNCTIONS:
        f = sample(fn, DYADIC)
        exact = evaluate(lambda t: fn.derivative(t, 1), DYADIC)
        fit = ladder_fit(lambda k: sup(scale_derivative(f, k) - exact), LADDER, DYADIC.h)
        orders.append(fit.fitted_order)
    verdict(2, min(orders) >= 0.95, f"min fitted order {min(orders):.4f} over {len(orders)} C2 functions")


def test_criterion_3_integral_identity(verdict):
    fn = Trig(1.0, 3.0, 0.2)
    g = Grid.over(0.0, 1.0, 1e-3, n_pad=8)
    gap = integral_identity_check(sample(fn, g), 4, 0.0, 1.0, reference=fn).gap
    hs = [2.0 ** -j for j in range(5, 11)]
    gaps = [integral_identity_check(sample(fn, Grid.over(0.0, 1.0, h, n_pad=8)), 4, 0.0, 1.0,
                                    reference=fn).gap for h in hs]
    fit = fit_order(hs, gaps)
    verdict(3, gap <= 1e-3 and fit.at_least(1.9),
            f"gap {gap:.2e} at h=1e-3; refinement order {fit.fitted_order:.3f} at eps/h=4")


def test_criterion_4_holder(verdict):
    g = Grid.over(0.0, 1.0, 1e-5, n_pad=2048)
    w = holder_estimate(sample(Weierstrass(0.5, 3), g), [64, 128, 256, 512, 1024, 2048])
    lin = holder_estimate(sample(Polynomial((0.0, 1.0)), Grid.over(0.0, 1.0, 1e-3)), LADDER)
    ok = abs(w.alpha_hat - 0.6309) <= 0.1 and w.r2 >= 0.9 and lin.alpha_hat >= 0.95
    verdict(4, ok, f"weierstrass alpha_hat {w.alpha_hat:.4f} (r2 {w.r2:.4f}); f=t alpha_hat {lin.alpha_hat:.4f}")


@pytest.fixture(scope="module")
def lemma_report():
    g = Grid.over(0.0, 1.0, 1e-4, n_pad=2048)
    h_fn = evaluate(lambda t: t * (1 - t), g) * sample(Weierstrass(0.5, 3), g)
    base = sample(Trig(), g)
    return lemma_scaling_check(h_fn, lambda k: base * (k * g.h) ** (0.6 - 1), 0.6, 0.63,
                               [16, 32, 64, 128, 256, 512])


def test_criterion_5i_lemma_boundary(verdict, lemma_report):
    b = lemma_report.boundary
    verdict("5(i)", b.exceeds(0.23), f"boundary integral order {b.fitted_order:.4f} vs 0.23 + 0.05")


def test_criterion_5ii_lemma_products(verdict, lemma_report):
    orders = {k: v.fitted_order for k, v in lemma_report.products.items()}
    ok = all(v.exceeds(1.23) for v in lemma_report.products.values())
    verdict("5(ii)", ok, "product integral orders "
            + ", ".join(f"{k} {v:.4f}" for k, v in orders.items()) + " vs 1.23 + 0.05")


def test_criterion_6_el_dbr(verdict):
    q = sample(Cosh(), DYADIC)
    el = ladder_fit(lambda k: sup(el_residual(OSC, q, k)), LADDER, DYADIC.h)
    dbr = ladder_fit(lambda k: sup(dbr_residual(OSC, q, k)), LADDER, DYADIC.h)
    t = sample(Polynomial((0.0, 1.0)), DYADIC)
    free = max(sup(el_residual(FREE, t, 4)), sup(dbr_residual(FREE, t, 4)))
    ok = el.at_least(0.95) and dbr.at_least(0.95) and free <= 1e-12
    verdict(6, ok, f"cosh EL order {el.fitted_order:.4f}, DBR order {dbr.fitted_order:.4f}; "
                   f"free line residual {free:.1e}")


def test_criterion_7_noether(verdict):
    q = sample(Polynomial((0.0, 3.0)), DYADIC)
    mom = noether_constant(FREE, q, Generator.from_expressions(0, 1), 4)
    en = noether_constant(FREE, q, Generator.from_expressions(1, 0), 4)
    osc = noether_constant(OSC, sample(Cosh(), DYADIC), Generator.from_expressions(1, 0), 4, ladder=LADDER)
    ok = (mom.initial == 3.0 and en.initial == -4.5 and max(mom.max_drift, en.max_drift) <= 1e-12
          and osc.eps_order.at_least(0.95))
    verdict(7, ok, f"momentum C={mom.initial.real:g}, energy C={en.initial.real:g}, "
                   f"drifts {mom.max_drift:.1e}/{en.max_drift:.1e}; oscillator drift order "
                   f"{osc.eps_order.fitted_order:.4f}")


def test_criterion_8_symmetry_search(verdict):
    g = Grid.over(0.0, 1.0, 2.0 ** -7, n_pad=8)
    probes = [sample(p, g) for p in (Trig(1.0, 2.0, 0.3), Polynomial((0.5, -1.0, 2.0, 0.7)),
                                     Exponential(0.8, 1.3))]
    free = symmetry_search(FREE, probes, 2, 2)
    osc = symmetry_search(OSC, probes, 2, 2)
    want = np.array([free.embed({"1": 1}, {}), free.embed({}, {"1": 1})]).T
    free_angle = float(np.max(subspace_angles(want, free.coefficients.T)))
    osc_angle = float(np.max(subspace_angles(np.array([osc.embed({"1": 1}, {})]).T, osc.coefficients.T)))
    ok = free_angle <= 1e-6 and len(osc) == 1 and osc_angle <= 1e-6
    verdict(8, ok, f"free particle: span{{(1,0),(0,1)}} inside the {len(free)}-dim null space "
                   f"(angle {free_angle:.1e}); oscillator: {len(osc)} generator, angle to (1,0) {osc_angle:.1e}")


def test_criterion_9_pontryagin(verdict):
    gaps = [reduction_check(L, sample(fn, DYADIC), 4).el_equiv_gap
            for L, fn in ((FREE, Polynomial((0.0, 3.0))), (OSC, Cosh()),
                          (Lagrangian.from_expression("v**2/2 - t*q"), Polynomial((0.2, 0.1, 0.0, 1 / 6))))]
    sys = ControlSystem.from_expressions("u**2/2", "u")
    triple = PontryaginTriple(sample(Polynomial((0.0, 3.0)), DYADIC), sample(Polynomial((3.0,)), DYADIC),
                              sample(Polynomial((-3.0,)), DYADIC))
    res = max(pontryagin_residuals(sys, triple, 4).sup().values())
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        en = hamiltonian_noether_constant(sys, triple, ControlGenerator.from_expressions(1, 0), 4)
        mom = hamiltonian_noether_constant(sys, triple, ControlGenerator.from_expressions(0, 1), 4)
    ok = (max(gaps) <= 1e-12 and res <= 1e-12 and en.initial == -4.5 and mom.initial == 3.0
          and max(en.max_drift, mom.max_drift) <= 1e-12)
    verdict(9, ok, f"reduction gaps max {max(gaps):.1e}; triple residual {res:.1e}; "
                   f"Hamiltonian C = {en.initial.real:g} and {mom.initial.real:g}")


def test_criterion_10_schrodinger(verdict):
    probe = ProbeGrid.over(0.0, 1.0, 11, -2.0, 2.0, 41)
    path = sample_path(DYADIC, lambda t: np.sin(5 * t) + 0.3 * t)
    k, m, hbar = 1.7, 0.8, 1.3
    energy = hbar ** 2 * k ** 2 / (2 * m)
    pw = PlaneWave(k=k, E=energy, hbar=hbar)
    free = SchrodingerParams(m=m, hbar=hbar)
    c_pw = constant_ex2(pw, free, path)
    r_pw = linear_pde_residual(pw, free, probe).sup
    omega = 2.0
    osc = SchrodingerParams(m=m, hbar=hbar, U=f"{0.5 * m * omega ** 2!r}*q**2")
    gs = HarmonicEigenstate(0, m=m, omega=omega, hbar=hbar)
    c_gs = constant_ex2(gs, osc, path)
    r_gs = linear_pde_residual(gs, osc, probe).sup
    same = all(np.array_equal(a_eps(path, kk).values, a_coeff(path, kk, 2).values, equal_nan=True)
               for kk in (1, 4, 16))
    ok = (abs(c_pw.initial - energy) <= 1e-12 and c_pw.max_drift <= 1e-12 and r_pw <= 1e-12
          and abs(c_gs.initial) <= 1e-12 and c_gs.max_drift <= 1e-12 and r_gs <= 1e-10 and same)
    verdict(10, ok, f"plane wave C={c_pw.initial.real:.12g} (target {energy:.12g}), drift {c_pw.max_drift:.1e}, "
                    f"residual {r_pw:.1e}; ground state C={abs(c_gs.initial):.1e}, drift {c_gs.max_drift:.1e}, "
                    f"residual {r_gs:.1e}; a_eps == a_coeff(.,.,2): {same}")


def _run_suite(out_dir: Path) -> dict[str, bytes]:
    reports = {}
    for cfg_path in sorted(CONFIGS.glob("*.json")):
        cfg = json.loads(cfg_path.read_text())
        out = out_dir / (cfg_path.stem + ".report")
        argv = [cfg["command"], *cfg.get("mode", []), str(cfg_path), "-o", str(out)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert cli.main(argv) in (cli.EXIT_PASS, cli.EXIT_FAIL), cfg_path.name
        reports[cfg_path.name] = out.read_bytes()
    return reports


def test_criterion_11_determinism(verdict, tmp_path, capsys):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    first, second = _run_suite(tmp_path / "a"), _run_suite(tmp_path / "b")
    capsys.readouterr()
    differ = [name for name in first if first[name] != second[name]]
    verdict(11, not differ and len(first) > 0,
            f"{len(first)} CLI reports byte-identical across two runs" if not differ
            else f"reports differ: {differ}")
