"""Scale calculus of variations on sampled trajectories.

Every checker evaluates a given trajectory; none of them solves anything.
Trajectories are :class:`~scalecalc.gridfn.GridFunction` objects whose
extension covers the nested scale derivatives (``n_pad >= 2k`` for the
Euler-Lagrange and DuBois-Reymond residuals).
"""

from __future__ import annotations

import csv
import io
import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy as sp

from .convergence import ConvergenceFit, EXACT_FLOOR, fit_order
from .errors import PaddingError
from .expr import ClosedForm
from .gridfn import AnalyticFunction, GridFunction, NotDifferentiableError, evaluate
from .scale_ops import (
    DERIVED_EXACT,
    _k,
    _require_core,
    leibniz_correction,
    scale_derivative,
    trapezoid,
)

Fn = Callable[..., np.ndarray]


class ExtremalWarning(UserWarning):
    """The trajectory fails the scale Euler-Lagrange check at the default tolerance."""


# ---------------------------------------------------------------------------
# Lagrangians and generators
# ---------------------------------------------------------------------------

def _fd(fn, args, slot, step):
    hi = list(args)
    lo = list(args)
    hi[slot] = hi[slot] + step
    lo[slot] = lo[slot] - step
    return (fn(*hi) - fn(*lo)) / (2 * step)


def check_partials(value: Fn, partials: Sequence[Fn], n_args: int, *, n_probes: int = 100,
                   seed: int = 0, rtol: float = 1e-6, complex_slots: Sequence[int] = (),
                   box: float = 1.0, name: str = "L") -> None:
    """Compare closed-form partials with central differences at random probes.

    Raises ``ValueError`` naming the first partial that disagrees.
    """
    rng = np.random.default_rng(seed)
    args = []
    for slot in range(n_args):
        x = rng.uniform(-box, box, n_probes).astype(complex)
        if slot in complex_slots:
            x = x + 1j * rng.uniform(-box, box, n_probes)
        args.append(x)
    with np.errstate(all="ignore"):
        base = np.asarray(value(*args), dtype=complex) * np.ones(n_probes)
        ok = np.isfinite(base)
        for slot, d in enumerate(partials):
            exact = np.asarray(d(*args), dtype=complex) * np.ones(n_probes)
            step = 1e-5 * np.maximum(1.0, np.abs(args[slot]))
            fd = _fd(value, args, slot, step)
            use = ok & np.isfinite(exact) & np.isfinite(fd)
            if use.sum() < n_probes // 2:
                raise ValueError(f"{name}: too few finite probe points to validate partial {slot + 1}")
            scale = np.maximum.reduce([np.abs(exact), np.abs(fd), 1e-3 * (1 + np.abs(base))])
            err = np.abs(fd - exact) / scale
            if np.max(err[use]) > rtol:
                raise ValueError(
                    f"{name}: partial d{slot + 1} disagrees with finite differences "
                    f"(relative error {np.max(err[use]):.2e})")


class Lagrangian:
    """``L(t, q, v)`` with closed-form partials; ``v`` may be complex.

    ``K`` is the declared bound on the differential along trajectories; it
    sets the default extremal tolerance ``10 eps K``.
    """

    def __init__(self, value: Fn, d1: Fn, d2: Fn, d3: Fn, K: float = 1.0, name: str = "L",
                 validate: bool = True, spec: dict | None = None):
        if K < 0:
            raise ValueError("K must be non-negative")
        self.value, self.d1, self.d2, self.d3 = value, d1, d2, d3
        self.K = float(K)
        self.name = name
        self.spec = spec
        if validate:
            check_partials(value, (d1, d2, d3), 3, complex_slots=(2,), name=name)

    def __call__(self, t, q, v):
        return self.value(t, q, v)

    @classmethod
    def from_expression(cls, expr: str, K: float = 1.0, name: str | None = None,
                        variables: Sequence[str] = ("t", "q", "v")) -> "Lagrangian":
        """Parse ``expr``; the third variable is the velocity (or control) slot."""
        L = ClosedForm(expr, variables)
        t, q, v = variables
        return cls(L, L.diff(t), L.diff(q), L.diff(v), K=K, name=name or expr,
                   spec={"kind": "expression", "expr": expr, "K": K})

    @classmethod
    def quadratic(cls, m: float = 1.0, potential: str = "0", K: float = 1.0) -> "Lagrangian":
        """``m v^2 / 2 + U(q)`` (potential enters with a plus sign)."""
        spec = {"kind": "quadratic", "m": m, "potential": potential, "K": K}
        obj = cls.from_expression(f"{m!r}*v**2/2 + ({potential})", K=K,
                                  name=f"{m}*v^2/2 + {potential}")
        obj.spec = spec
        return obj

    @classmethod
    def from_dict(cls, d: dict) -> "Lagrangian":
        kind = d.get("kind", "expression")
        K = float(d.get("K", 1.0))
        if kind == "quadratic":
            return cls.quadratic(float(d.get("m", 1.0)), potential_expression(d.get("potential")), K)
        if kind == "expression":
            return cls.from_expression(d["expr"], K=K)
        raise ValueError(f"unknown Lagrangian kind {kind!r}")

    def to_dict(self) -> dict:
        if self.spec is None:
            raise ValueError("Lagrangian built from raw callables has no serial form")
        return dict(self.spec)

    def __repr__(self):
        return f"Lagrangian({self.name})"


def potential_expression(spec) -> str:
    """Expression in ``q`` for a potential given as JSON ``{kind, params}``."""
    if spec is None:
        return "0"
    if isinstance(spec, str):
        return spec
    kind = spec.get("kind", "zero")
    p = spec.get("params", {})
    if kind == "zero":
        return "0"
    if kind == "constant":
        return repr(float(p["c"]))
    if kind == "harmonic":
        return f"{float(p.get('k', 1.0))!r}*q**2/2"
    if kind == "polynomial":
        return " + ".join(f"({float(c)!r})*q**{i}" for i, c in enumerate(p["coeffs"])) or "0"
    if kind == "expression":
        return p["expr"]
    raise ValueError(f"unknown potential kind {kind!r}")


class Generator:
    """Infinitesimal symmetry ``(tau(t, q), xi(t, q))`` of declared Hölder class ``beta``."""

    def __init__(self, tau: Fn, xi: Fn, beta: float | None = None, name: str = "",
                 spec: dict | None = None):
        self.tau, self.xi = tau, xi
        self.beta = beta
        self.name = name
        self.spec = spec

    @classmethod
    def from_expressions(cls, tau, xi, beta: float | None = None) -> "Generator":
        ct, cx = ClosedForm(str(tau), ("t", "q")), ClosedForm(str(xi), ("t", "q"))
        return cls(ct, cx, beta, name=f"({ct}, {cx})",
                   spec={"tau": str(tau), "xi": str(xi), "beta": beta})

    @classmethod
    def from_dict(cls, d: dict) -> "Generator":
        return cls.from_expressions(d["tau"], d["xi"], d.get("beta"))

    def to_dict(self) -> dict:
        if self.spec is None:
            raise ValueError("Generator built from raw callables has no serial form")
        return dict(self.spec)

    def combine(self, a: complex, other: "Generator", b: complex) -> "Generator":
        """The generator ``a * self + b * other``."""
        return Generator(lambda t, q: a * self.tau(t, q) + b * other.tau(t, q),
                         lambda t, q: a * self.xi(t, q) + b * other.xi(t, q),
                         name=f"{a}*{self.name} + {b}*{other.name}")

    def on(self, q: GridFunction) -> tuple[GridFunction, GridFunction]:
        """``tau(t, q(t))`` and ``xi(t, q(t))`` as grid functions."""
        return evaluate(self.tau, q.grid, q), evaluate(self.xi, q.grid, q)

    def __repr__(self):
        return f"Generator{self.name}"


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class ConstancyReport:
    series: GridFunction
    max_drift: float
    eps_order: ConvergenceFit | None = None

    @property
    def values(self) -> np.ndarray:
        return self.series.core()

    @property
    def initial(self) -> complex:
        return complex(self.values[0])

    def to_dict(self) -> dict:
        c0 = self.initial
        d = {"C0": [c0.real, c0.imag], "max_drift": self.max_drift}
        if self.eps_order is not None:
            d["eps_order"] = self.eps_order.to_dict()
        return d

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "re", "im"])
        for t, v in zip(self.series.grid.core_nodes, self.values):
            w.writerow([repr(float(t)), repr(float(v.real)), repr(float(v.imag))])
        return buf.getvalue()


def constancy(series: GridFunction) -> ConstancyReport:
    v = series.core()
    return ConstancyReport(series, float(np.max(np.abs(v - v[0]))))


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------

def _velocity(q: GridFunction, k: int) -> GridFunction:
    return scale_derivative(q, k)


def el_residual(L: Lagrangian, q: GridFunction, eps) -> GridFunction:
    """``d2 L - box d3 L`` along ``(t, q, box q)``."""
    k = _k(eps)
    v = _velocity(q, k)
    p = evaluate(L.d3, q.grid, q, v)
    return _require_core(evaluate(L.d2, q.grid, q, v) - scale_derivative(p, k), "el_residual", k)


def default_tolerance(L: Lagrangian, q: GridFunction, eps) -> float:
    return 10.0 * _k(eps) * q.grid.h * L.K


def is_scale_extremal(L: Lagrangian, q: GridFunction, eps, tol: float | None = None) -> bool:
    tol = default_tolerance(L, q, eps) if tol is None else tol
    return float(np.max(np.abs(el_residual(L, q, eps).core()))) <= tol


def dbr_residual(L: Lagrangian, q: GridFunction, eps, variant: str = DERIVED_EXACT) -> GridFunction:
    """``box{L - d3L . box q} - d1 L + correction(d3 L, box q)``."""
    k = _k(eps)
    v = _velocity(q, k)
    p = evaluate(L.d3, q.grid, q, v)
    energy = evaluate(L.value, q.grid, q, v) - p * v
    res = (scale_derivative(energy, k) - evaluate(L.d1, q.grid, q, v)
           + leibniz_correction(p, v, k, variant))
    return _require_core(res, "dbr_residual", k)


def invariance_integrand(L: Lagrangian, q: GridFunction, gen: Generator, eps) -> GridFunction:
    """``d1L tau + d2L xi + d3L (box xi - box q box tau)`` with tau, xi composed with q."""
    k = _k(eps)
    v = _velocity(q, k)
    tau, xi = gen.on(q)
    out = (evaluate(L.d1, q.grid, q, v) * tau + evaluate(L.d2, q.grid, q, v) * xi
           + evaluate(L.d3, q.grid, q, v) * (scale_derivative(xi, k) - v * scale_derivative(tau, k)))
    return out


def integrate_subintervals(integrand: GridFunction, subintervals: Sequence[tuple[float, float]]) -> list[complex]:
    return [trapezoid(integrand, ta, tb) for ta, tb in subintervals]


def invariance_residual(L: Lagrangian, q: GridFunction, gen: Generator, eps,
                        subintervals: Sequence[tuple[float, float]]) -> list[complex]:
    """Integral of the invariance integrand over each ``(t_a, t_b)`` (grid nodes)."""
    return integrate_subintervals(invariance_integrand(L, q, gen, eps), subintervals)


def is_invariant(values: Sequence[complex], subintervals, tol: float) -> bool:
    return all(abs(v) <= tol * abs(tb - ta) for v, (ta, tb) in zip(values, subintervals))


def noether_density(L: Lagrangian, gen: Generator, t, q, v):
    """``d3L . xi + (L - d3L . v) tau`` at explicit arguments."""
    p = L.d3(t, q, v)
    return p * gen.xi(t, q) + (L.value(t, q, v) - p * v) * gen.tau(t, q)


def noether_constant(L: Lagrangian, q: GridFunction, gen: Generator, eps,
                     ladder: Sequence[int] | None = None, check_extremal: bool = True) -> ConstancyReport:
    """The candidate constant ``C(t)`` along ``q`` with its drift.

    With ``ladder`` the drift is recomputed at every ``eps = k h`` and its
    order fitted.
    """
    k = _k(eps)
    if check_extremal:
        try:
            tol = default_tolerance(L, q, k)
            res = float(np.max(np.abs(el_residual(L, q, k).core())))
            if res > tol:
                warnings.warn(f"trajectory is not a scale extremal at tol {tol:.3g} "
                              f"(sup residual {res:.3g})", ExtremalWarning, stacklevel=2)
        except PaddingError:
            pass
    v = _velocity(q, k)
    series = evaluate(lambda t, qq, vv: noether_density(L, gen, t, qq, vv), q.grid, q, v)
    report = constancy(_require_core(series, "noether_constant", k))
    if ladder is not None:
        drifts, scales = [], []
        for kk in ladder:
            vv = _velocity(q, kk)
            s = evaluate(lambda t, qq, w: noether_density(L, gen, t, qq, w), q.grid, q, vv)
            rep = constancy(_require_core(s, "noether_constant", kk))
            drifts.append(rep.max_drift)
            scales.append(float(np.max(np.abs(rep.values))))
        report.eps_order = fit_order([kk * q.grid.h for kk in ladder], drifts,
                                     floor=EXACT_FLOOR * max(1.0, max(scales)),
                                     label="noether drift")
    return report


# ---------------------------------------------------------------------------
# classical reference
# ---------------------------------------------------------------------------

def _ddt(fn: Callable[[np.ndarray], np.ndarray], t: np.ndarray, step: float) -> np.ndarray:
    # five-point central difference, O(step^4)
    return (-fn(t + 2 * step) + 8 * fn(t + step) - 8 * fn(t - step) + fn(t - 2 * step)) / (12 * step)


@dataclass
class ClassicalOracle:
    t: np.ndarray
    el: np.ndarray
    dbr: np.ndarray
    noether: np.ndarray | None = None
    noether_rate: np.ndarray | None = None


def classical_oracle(L: Lagrangian, q: AnalyticFunction, t, gen: Generator | None = None,
                     step: float = 1e-3) -> ClassicalOracle:
    """Classical (eps -> 0) EL, DuBois-Reymond and Noether quantities on nodes ``t``.

    ``q`` must carry a closed-form derivative; time derivatives of composite
    terms use a five-point stencil with spacing ``step``.
    """
    if not q.differentiable:
        raise NotDifferentiableError(f"{q.kind} trajectory has no closed-form derivative")
    t = np.asarray(t, dtype=float)

    def args(s):
        return s, q(s), q.derivative(s)

    def momentum(s):
        return L.d3(*args(s))

    def energy(s):
        a = args(s)
        return L.value(*a) - L.d3(*a) * a[2]

    el = L.d2(*args(t)) - _ddt(momentum, t, step)
    dbr = L.d1(*args(t)) - _ddt(energy, t, step)
    out = ClassicalOracle(t, np.asarray(el, complex), np.asarray(dbr, complex))
    if gen is not None:
        def C(s):
            return noether_density(L, gen, *args(s))
        out.noether = np.asarray(C(t), complex)
        out.noether_rate = np.asarray(_ddt(C, t, step), complex)
    return out


# ---------------------------------------------------------------------------
# numerical symmetry search
# ---------------------------------------------------------------------------

def monomials(degree: int) -> list[tuple[int, int]]:
    """Exponent pairs ``(i, j)`` of ``t^i q^j`` with ``i + j <= degree``."""
    if degree < 0 or degree > 2:
        raise ValueError("ansatz degree must be 0, 1 or 2")
    return [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]


def _monomial_name(i, j):
    parts = (["t" if i == 1 else f"t**{i}"] if i else []) + (["q" if j == 1 else f"q**{j}"] if j else [])
    return "*".join(parts) or "1"


@dataclass
class SymmetrySearchResult:
    generators: list[tuple[Generator, float]]
    coefficients: np.ndarray  # rows: null vectors over [tau basis | xi basis]
    basis: list[str]
    singular_values: np.ndarray
    status: str = "OK"
    notes: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter(self.generators)

    def __len__(self):
        return len(self.generators)

    def embed(self, tau: dict[str, float], xi: dict[str, float]) -> np.ndarray:
        """Coefficient vector of a generator given as ``{monomial: coeff}`` maps."""
        n = len(self.basis)
        vec = np.zeros(2 * n)
        for name, c in tau.items():
            vec[self.basis.index(name)] = c
        for name, c in xi.items():
            vec[n + self.basis.index(name)] = c
        return vec

    def to_dict(self) -> dict:
        return {"status": self.status, "basis": self.basis,
                "singular_values": [float(s) for s in self.singular_values],
                "generators": [{"tau": g.spec["tau"], "xi": g.spec["xi"], "residual": r}
                               for g, r in self.generators],
                "notes": self.notes}


def symmetry_search(L: Lagrangian, probes: Sequence[GridFunction], degree: int, eps,
                    rel_tol: float = 1e-8) -> SymmetrySearchResult:
    """Null space of the invariance condition over a monomial ansatz.

    ``tau = sum c_m phi_m``, ``xi = sum d_m phi_m`` with ``phi_m`` the monomials
    of :func:`monomials`.  Each probe trajectory and each adjacent-node
    subinterval of its core gives one complex equation, linear in ``(c, d)``.
    """
    k = _k(eps)
    expo = monomials(degree)
    names = [_monomial_name(i, j) for i, j in expo]
    n = len(expo)
    blocks = []
    for q in probes:
        v = _velocity(q, k)
        d1 = evaluate(L.d1, q.grid, q, v)
        d2 = evaluate(L.d2, q.grid, q, v)
        d3 = evaluate(L.d3, q.grid, q, v)
        cols_tau, cols_xi = [], []
        for i, j in expo:
            phi = evaluate(lambda t, qq, i=i, j=j: t ** i * qq ** j, q.grid, q)
            dphi = scale_derivative(phi, k)
            cols_tau.append(d1 * phi - d3 * v * dphi)
            cols_xi.append(d2 * phi + d3 * dphi)
        rows = []
        for col in cols_tau + cols_xi:
            c = col.core()
            rows.append(0.5 * q.grid.h * (c[1:] + c[:-1]))
        blocks.append(np.array(rows).T)
    A = np.vstack(blocks) if blocks else np.zeros((0, 2 * n))
    A = np.vstack([A.real, A.imag])

    notes = []
    status = "OK"
    if len(probes) < 2 or A.shape[0] < 2 * n:
        status = "UNDERDETERMINED"
        notes.append("need at least two probe trajectories and as many equations as unknowns")

    norms = np.linalg.norm(A, axis=0)
    scale = np.where(norms > 0, norms, 1.0)
    _, s, vt = np.linalg.svd(A / scale, full_matrices=True)
    s_full = np.concatenate([s, np.zeros(2 * n - s.size)])
    smax = s_full.max() if s_full.size else 0.0
    null = vt[s_full <= rel_tol * smax] if smax > 0 else vt
    coeffs = null / scale
    if coeffs.size:
        qmat, _ = np.linalg.qr(coeffs.T)
        coeffs = qmat.T
    coeffs = np.where(np.abs(coeffs) < 1e-13, 0.0, coeffs)

    t_sym, q_sym = sp.symbols("t q")
    basis_exprs = [t_sym ** i * q_sym ** j for i, j in expo]
    gens = []
    for row in coeffs:
        tau_e = sum(sp.Float(c) * b for c, b in zip(row[:n], basis_exprs) if c != 0)
        xi_e = sum(sp.Float(c) * b for c, b in zip(row[n:], basis_exprs) if c != 0)
        g = Generator.from_expressions(sp.sympify(tau_e), sp.sympify(xi_e))
        gens.append((g, float(np.max(np.abs(A @ row))) if A.size else 0.0))
    return SymmetrySearchResult(gens, coeffs, names, s_full, status, notes)
