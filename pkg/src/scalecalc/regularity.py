"""Hölder-exponent estimation and the scaling orders of the key lemma."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .convergence import ConvergenceFit, fit_order
from .errors import DegenerateError
from .gridfn import GridFunction
from .scale_ops import conj_scale_derivative, scale_derivative, trapezoid

#: fits below this r^2 are reported as unreliable rather than failed
RELIABLE_R2 = 0.9


@dataclass
class HolderEstimate:
    alpha_hat: float
    c_hat: float
    r2: float
    ladder: list[tuple[float, float]]
    r2_threshold: float = RELIABLE_R2

    @property
    def reliable(self) -> bool:
        return self.r2 >= self.r2_threshold

    def to_dict(self) -> dict:
        return {"alpha_hat": self.alpha_hat, "c_hat": self.c_hat, "r2": self.r2,
                "reliable": self.reliable,
                "ladder": [{"eps": e, "oscillation": o} for e, o in self.ladder]}


def oscillation(f: GridFunction, k: int) -> float:
    """``max |f(t + k h) - f(t)|`` over core nodes ``t``."""
    g = f.grid
    lo, hi = g.n_pad, g.n_pad + g.n_core - 1
    if hi + k >= g.size:
        # lag runs past the extension: restrict to core pairs
        v = f.window(lo, hi)
        return float(np.max(np.abs(v[k:] - v[:-k])))
    v = f.window(lo, hi + k)
    return float(np.max(np.abs(v[k:] - v[:-k])))


def holder_estimate(f: GridFunction, ladder: Sequence[int], r2_threshold: float = RELIABLE_R2) -> HolderEstimate:
    """Fit ``log osc(eps) = alpha log eps + log c`` over lags ``eps = k h``."""
    ks = [int(k) for k in ladder]
    if len(ks) < 4:
        raise ValueError(f"ladder needs at least 4 points, got {len(ks)}")
    if any(k < 1 for k in ks):
        raise ValueError("ladder lags must be positive node counts")
    osc = [oscillation(f, k) for k in ks]
    scale = float(np.max(np.abs(f.core())))
    if max(osc) <= 1e-14 * max(scale, 1.0):
        raise DegenerateError("function is constant on the core; Hölder exponent undefined")
    if min(osc) <= 0:
        raise DegenerateError("zero oscillation at some lag; Hölder exponent undefined")
    fit = fit_order([k * f.grid.h for k in ks], osc)
    return HolderEstimate(fit.fitted_order, float(np.exp(fit.intercept)), fit.r2,
                          list(zip(fit.eps, osc)), r2_threshold)


def beta_threshold(alpha: float) -> float:
    """Minimal Hölder class of symmetry generators for trajectories in H^alpha."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha if alpha >= 0.5 else 1.0 - alpha


@dataclass
class LemmaScalingReport:
    alpha: float
    beta: float
    boundary: ConvergenceFit
    products: dict[str, ConvergenceFit]
    hypothesis_constant: float
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.boundary.passed and all(p.passed for p in self.products.values())

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta,
                "hypothesis_constant": self.hypothesis_constant,
                "boundary": self.boundary.to_dict(),
                "products": {k: v.to_dict() for k, v in self.products.items()},
                "passed": self.passed}


_OPS = {"box": scale_derivative, "boxminus": conj_scale_derivative}


def lemma_scaling_check(h_fn: GridFunction, f_family: Callable[[int], GridFunction],
                        alpha: float, beta: float, ladder: Sequence[int],
                        a: float | None = None, b: float | None = None,
                        endpoint_tol: float = 1e-12) -> LemmaScalingReport:
    """Empirical orders of the two lemma integrals over ``eps = k h``.

    * ``|int_a^b box(f_eps h) dt|`` must be o(eps^(alpha + beta - 1));
    * ``|eps int_a^b Op(f_eps) Op'(h) dt|`` must be o(eps^(alpha + beta)) for
      each ``Op, Op'`` in {box, boxminus}.

    ``f_family(k)`` returns ``f_eps`` sampled on the same grid as ``h_fn``.
    """
    grid = h_fn.grid
    a = grid.a if a is None else a
    b = grid.b if b is None else b
    for t in (a, b):
        if abs(h_fn(t)) > endpoint_tol:
            raise ValueError(f"h must vanish at the endpoints; |h({t})| = {abs(h_fn(t)):.3g}")
    if beta < beta_threshold(alpha):
        raise ValueError(f"beta={beta} is below the required threshold {beta_threshold(alpha)}")
    ks = [int(k) for k in ladder]
    if len(ks) < 4:
        raise ValueError(f"ladder needs at least 4 points, got {len(ks)}")

    ia, ib = grid.index_of(a), grid.index_of(b)
    boundary, products = [], {f"{p}*{q}": [] for p in _OPS for q in _OPS}
    consts = []
    for k in ks:
        e = k * grid.h
        f = f_family(k)
        # the hypothesis bounds |f_eps| at both t and t +- eps for t in [a, b]
        vals = np.abs(f.window(ia - k, ib + k))
        consts.append(float(vals.max()) / e ** (alpha - 1))
        boundary.append(abs(trapezoid(scale_derivative(f * h_fn, k), a, b)))
        for p, opp in _OPS.items():
            fp = opp(f, k)
            for q, opq in _OPS.items():
                products[f"{p}*{q}"].append(abs(e * trapezoid(fp * opq(h_fn, k), a, b)))

    eps = [k * grid.h for k in ks]
    bfit = fit_order(eps, boundary, label="int box(f h)", threshold=alpha + beta - 1)
    pfits = {name: fit_order(eps, v, label=f"eps int {name}", threshold=alpha + beta)
             for name, v in products.items()}
    return LemmaScalingReport(alpha, beta, bfit, pfits, max(consts))
