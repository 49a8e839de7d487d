"""Finite-scale quantum derivatives and the identities they satisfy.

For ``eps = k h`` every operator is an exact read of grid nodes:

* ``delta_plus f(t)  = (f(t + eps) - f(t)) / eps``
* ``delta_minus f(t) = (f(t) - f(t - eps)) / eps``
* ``scale_derivative = 1/2 [(D+ + D-) - i (D+ - D-)]`` applied to the real
  and imaginary parts separately, ``box f = box Re f + i box Im f``
* ``conj_scale_derivative`` is the conjugate operator on each part,
  ``boxminus f = conj(box Re f) + i conj(box Im f)``.  For real ``f`` it is
  simply the node-wise conjugate of ``box f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .convergence import ConvergenceFit, fit_order, EXACT_FLOOR
from .errors import GridMismatchError, OffGridError, PaddingError
from .gridfn import AnalyticFunction, GridFunction, evaluate, shift

DERIVED_EXACT = "derived_exact"
PAPER_PRINTED = "paper_printed"
VARIANTS = (DERIVED_EXACT, PAPER_PRINTED)


@dataclass(frozen=True)
class ScaleParams:
    """The scale ``eps = k h`` of a quantum operator, as a node count ``k``."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"scale must be a positive integer node count, got k={self.k}")
        object.__setattr__(self, "k", int(self.k))

    def eps(self, grid) -> float:
        return self.k * grid.h


def _k(eps) -> int:
    return eps.k if isinstance(eps, ScaleParams) else ScaleParams(eps).k


def _require_core(out: GridFunction, what: str, k: int) -> GridFunction:
    if not out.core_is_valid():
        g = out.grid
        raise PaddingError(
            f"{what}: extension of n_pad={g.n_pad} nodes does not cover eps={k}h on the core")
    return out


def delta_plus(f: GridFunction, eps) -> GridFunction:
    k = _k(eps)
    return _require_core((shift(f, k) - f) * (1.0 / (k * f.grid.h)), "delta_plus", k)


def delta_minus(f: GridFunction, eps) -> GridFunction:
    k = _k(eps)
    return _require_core((f - shift(f, -k)) * (1.0 / (k * f.grid.h)), "delta_minus", k)


def _box_real(dp: GridFunction, dm: GridFunction, sign: int) -> GridFunction:
    # sign=+1: box, sign=-1: its conjugate; dp, dm are real-valued here
    return (dp + dm) * 0.5 - (dp - dm) * (0.5j * sign)


def _box(f: GridFunction, eps, sign: int, what: str) -> GridFunction:
    k = _k(eps)
    h = f.grid.h
    up, down = shift(f, k), shift(f, -k)
    dp = (up - f) * (1.0 / (k * h))
    dm = (f - down) * (1.0 / (k * h))
    out = _box_real(dp.real, dm.real, sign) + _box_real(dp.imag, dm.imag, sign) * 1j
    return _require_core(out, what, k)


def scale_derivative(f: GridFunction, eps) -> GridFunction:
    return _box(f, eps, +1, "scale_derivative")


def conj_scale_derivative(f: GridFunction, eps) -> GridFunction:
    return _box(f, eps, -1, "conj_scale_derivative")


def epsilon_mean(f: GridFunction, eps, sigma) -> GridFunction:
    """Trapezoid mean of ``f`` over ``[t, t + eps]`` (sigma=+) or ``[t - eps, t]`` (sigma=-)."""
    k = _k(eps)
    s = _sigma(sigma)
    acc = (f + shift(f, s * k)) * 0.5
    for j in range(1, k):
        acc = acc + shift(f, s * j)
    return _require_core(acc * (1.0 / k), "epsilon_mean", k)


def _sigma(sigma) -> int:
    if sigma in ("+", 1, +1):
        return 1
    if sigma in ("-", -1):
        return -1
    raise ValueError(f"sigma must be '+' or '-', got {sigma!r}")


# ---------------------------------------------------------------------------
# product rule
# ---------------------------------------------------------------------------

def leibniz_correction(f: GridFunction, g: GridFunction, eps, variant: str = DERIVED_EXACT) -> GridFunction:
    """The eps-term in ``box(fg) = box f . g + f . box g + correction``.

    ``derived_exact`` is ``(i eps / 2)(bf bg - bf cg - cf bg - cf cg)`` with
    ``b = box`` and ``c = boxminus``; it makes the identity exact on the grid.
    ``paper_printed`` is ``i eps (bf cg - cf bg - bf bg - cf cg)``.
    """
    if f.grid != g.grid:
        raise GridMismatchError(f"{f.grid} != {g.grid}")
    k = _k(eps)
    e = k * f.grid.h
    bf, bg = scale_derivative(f, k), scale_derivative(g, k)
    cf, cg = conj_scale_derivative(f, k), conj_scale_derivative(g, k)
    if variant == DERIVED_EXACT:
        return (bf * bg - bf * cg - cf * bg - cf * cg) * (0.5j * e)
    if variant == PAPER_PRINTED:
        return (bf * cg - cf * bg - bf * bg - cf * cg) * (1j * e)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


@dataclass
class LeibnizReport:
    lhs: GridFunction
    main_terms: GridFunction
    correction: GridFunction
    residual_max: float
    variant: str
    eps: float
    input_scale: float = 0.0

    @property
    def scale(self) -> float:
        # quotient roundoff grows like |f g| / eps, so a near-constant product is not held to its tiny derivative
        return max(float(np.max(np.abs(self.lhs.core()))), self.input_scale)

    @property
    def relative_residual(self) -> float:
        s = self.scale
        return self.residual_max / s if s > 0 else self.residual_max

    def to_dict(self) -> dict:
        return {"variant": self.variant, "eps": self.eps, "residual_max": self.residual_max,
                "relative_residual": self.relative_residual}


def leibniz(f: GridFunction, g: GridFunction, eps, variant: str = DERIVED_EXACT) -> LeibnizReport:
    if f.grid != g.grid:
        raise GridMismatchError(f"{f.grid} != {g.grid}")
    k = _k(eps)
    lhs = scale_derivative(f * g, k)
    main = scale_derivative(f, k) * g + f * scale_derivative(g, k)
    corr = leibniz_correction(f, g, k, variant)
    resid = float(np.max(np.abs((lhs - main - corr).core())))
    e = k * f.grid.h
    fg = (f * g).core()
    return LeibnizReport(lhs, main, corr, resid, variant, e, float(np.max(np.abs(fg[np.isfinite(fg)]))) / e)


# ---------------------------------------------------------------------------
# integral identity
# ---------------------------------------------------------------------------

def trapezoid(f: GridFunction, a: float, b: float) -> complex:
    """Composite trapezoid integral of ``f`` between the nodes ``a`` and ``b``."""
    i, j = f.grid.index_of(a), f.grid.index_of(b)
    if i == j:
        return 0j
    sign = 1.0
    if j < i:
        i, j, sign = j, i, -1.0
    v = f.window(i, j)
    return complex(sign * f.grid.h * (v.sum() - 0.5 * (v[0] + v[-1])))


def _exact_mean(fn: AnalyticFunction, t: float, e: float, s: int) -> complex:
    lo, hi = (t, t + e) if s > 0 else (t - e, t)
    kw = dict(epsabs=1e-14, epsrel=1e-13, limit=200)
    re = integrate.quad(lambda x: float(np.real(fn(x))), lo, hi, **kw)[0]
    im = integrate.quad(lambda x: float(np.imag(fn(x))), lo, hi, **kw)[0]
    return complex(re, im) / e


@dataclass
class IntegralIdentity:
    lhs: complex
    rhs: complex
    gap: float
    eps: float
    means: str

    def to_dict(self):
        return {"lhs": [self.lhs.real, self.lhs.imag], "rhs": [self.rhs.real, self.rhs.imag],
                "gap": self.gap, "eps": self.eps, "means": self.means}


def integral_identity_check(f: GridFunction, eps, a: float, b: float,
                            reference: AnalyticFunction | None = None) -> IntegralIdentity:
    """Compare ``int_a^b box f dt`` with the bracket of eps-means at ``b`` minus ``a``.

    With ``reference=None`` the means are grid trapezoids, in which case the
    two sides telescope into each other and agree to roundoff.  Passing the
    closed form that ``f`` was sampled from computes the means by adaptive
    quadrature instead, so the gap measures the grid quadrature error of the
    left-hand side.
    """
    k = _k(eps)
    e = k * f.grid.h
    for t in (a, b):
        try:
            f.grid.index_of(t)
        except OffGridError:
            raise OffGridError(f"integral endpoint {t} is not a grid node") from None
    lhs = trapezoid(scale_derivative(f, k), a, b)

    if reference is None:
        mp, mm = epsilon_mean(f, k, "+"), epsilon_mean(f, k, "-")
        mean = lambda t: (mp(t), mm(t))  # noqa: E731
        mode = "trapezoid"
    else:
        mean = lambda t: (_exact_mean(reference, t, e, 1), _exact_mean(reference, t, e, -1))  # noqa: E731
        mode = "quadrature"

    def bracket(t):
        p, m = mean(t)
        return 0.5 * ((p + m) - 1j * (p - m))

    rhs = bracket(b) - bracket(a)
    return IntegralIdentity(lhs, rhs, abs(lhs - rhs), e, mode)


# ---------------------------------------------------------------------------
# composite-function expansion
# ---------------------------------------------------------------------------

def a_coeff(x: GridFunction, eps, j: int) -> GridFunction:
    """``1/2 [((D+x)^j - (-1)^j (D-x)^j) - i ((D+x)^j + (-1)^j (D-x)^j)]``."""
    if int(j) != j or j < 1:
        raise ValueError(f"a_coeff needs an integer j >= 1, got {j}")
    k = _k(eps)
    dp, dm = delta_plus(x, k), delta_minus(x, k)
    pj = evaluate(lambda t, u: u ** j, x.grid, dp)
    mj = evaluate(lambda t, u: u ** j, x.grid, dm) * ((-1) ** j)
    return (pj - mj) * 0.5 - (pj + mj) * 0.5j


def composite_expansion_terms(f, x: GridFunction, eps, n: int) -> tuple[GridFunction, GridFunction]:
    """Return ``(box[f(t, x(t))], df/dt + sum_j 1/j! d^j f/dx^j eps^(j-1) a_j)``.

    ``f`` is a :class:`~scalecalc.expr.ClosedForm` in variables ``(t, x)``.
    """
    k = _k(eps)
    e = k * x.grid.h
    lhs = scale_derivative(evaluate(f, x.grid, x), k)
    rhs = evaluate(f.diff(f.variables[0]), x.grid, x)
    for j in range(1, n + 1):
        dj = evaluate(f.diff(f.variables[1], j), x.grid, x)
        rhs = rhs + dj * a_coeff(x, k, j) * (e ** (j - 1) / math.factorial(j))
    return lhs, rhs


def composite_expansion_residual(f, x: GridFunction, ks: Sequence[int], n: int) -> ConvergenceFit:
    """Order of ``sup |box f(t,x) - expansion|`` over the ladder ``eps = k h``.

    Passes when the residual is o(eps^(1/n)).
    """
    if n < 1:
        raise ValueError("expansion order n must be >= 1")
    if len(ks) < 4:
        raise ValueError(f"ladder needs at least 4 points, got {len(ks)}")
    sups, scales = [], []
    for k in ks:
        lhs, rhs = composite_expansion_terms(f, x, k, n)
        sups.append(float(np.max(np.abs((lhs - rhs).core()))))
        scales.append(float(np.max(np.abs(lhs.core()))))
    floor = EXACT_FLOOR * max(1.0, max(scales))
    return fit_order([k * x.grid.h for k in ks], sups, floor=floor,
                     label=f"composite expansion n={n}", threshold=1.0 / n)
