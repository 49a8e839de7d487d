"""Scale optimal control: Hamiltonian, Pontryagin residuals and Noether constants.

Problem: minimise ``int L(t, q, u) dt`` subject to ``box q = phi(t, q, u)``.
The Hamiltonian is ``H = L + p . phi``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GridMismatchError
from .expr import ClosedForm
from .gridfn import GridFunction, evaluate
from .regularity import HolderEstimate, holder_estimate
from .scale_ops import _k, _require_core, scale_derivative
from .variational import (
    ConstancyReport,
    ExtremalWarning,
    Lagrangian,
    check_partials,
    constancy,
    el_residual,
    integrate_subintervals,
)

Fn = Callable[..., np.ndarray]
_VARS = ("t", "q", "u")


class ControlSystem:
    """Running cost ``L(t, q, u)`` and dynamics ``phi(t, q, u)`` with partials."""

    def __init__(self, L: Lagrangian, phi: Fn, dphi1: Fn, dphi2: Fn, dphi3: Fn,
                 K: float | None = None, validate: bool = True, spec: dict | None = None):
        self.L = L
        self.phi, self.dphi1, self.dphi2, self.dphi3 = phi, dphi1, dphi2, dphi3
        self.K = L.K if K is None else float(K)
        self.spec = spec
        if validate:
            check_partials(phi, (dphi1, dphi2, dphi3), 3, complex_slots=(2,), name="phi")

    @classmethod
    def from_expressions(cls, lagrangian: str, phi: str, K: float = 1.0) -> "ControlSystem":
        L = Lagrangian.from_expression(lagrangian, K=K, variables=_VARS)
        f = ClosedForm(phi, _VARS)
        return cls(L, f, f.diff("t"), f.diff("q"), f.diff("u"), K,
                   spec={"lagrangian": lagrangian, "phi": phi, "K": K})

    @classmethod
    def from_dict(cls, d: dict) -> "ControlSystem":
        return cls.from_expressions(d["lagrangian"], d["phi"], float(d.get("K", 1.0)))

    @classmethod
    def reduced(cls, L: Lagrangian) -> "ControlSystem":
        """The calculus-of-variations case ``phi = u``."""
        one = lambda t, q, u: np.ones(np.broadcast(t, q, u).shape, dtype=complex)  # noqa: E731
        zero = lambda t, q, u: np.zeros(np.broadcast(t, q, u).shape, dtype=complex)  # noqa: E731
        return cls(L, lambda t, q, u: u + 0j, zero, zero, one, validate=False)


class Hamiltonian:
    """``H(t, q, u, p) = L(t, q, u) + p phi(t, q, u)`` and its partials."""

    def __init__(self, sys: ControlSystem):
        self.sys = sys

    def __call__(self, t, q, u, p):
        return self.sys.L.value(t, q, u) + p * self.sys.phi(t, q, u)

    def d1(self, t, q, u, p):
        return self.sys.L.d1(t, q, u) + p * self.sys.dphi1(t, q, u)

    def d2(self, t, q, u, p):
        return self.sys.L.d2(t, q, u) + p * self.sys.dphi2(t, q, u)

    def d3(self, t, q, u, p):
        return self.sys.L.d3(t, q, u) + p * self.sys.dphi3(t, q, u)

    def d4(self, t, q, u, p):
        return self.sys.phi(t, q, u)


def hamiltonian(sys: ControlSystem) -> Hamiltonian:
    return Hamiltonian(sys)


@dataclass
class PontryaginTriple:
    q: GridFunction
    u: GridFunction
    p: GridFunction

    def __post_init__(self):
        if not (self.q.grid == self.u.grid == self.p.grid):
            raise GridMismatchError("q, u and p must share one grid")
        if not self.q.is_real(tol=1e-12):
            raise ValueError("the state q must be real-valued")

    @property
    def grid(self):
        return self.q.grid

    def regularity(self, ladder: Sequence[int]) -> dict[str, HolderEstimate]:
        return {name: holder_estimate(getattr(self, name), ladder) for name in ("q", "u", "p")}


@dataclass
class PontryaginResiduals:
    state: GridFunction
    adjoint: GridFunction
    stationary: GridFunction

    def sup(self) -> dict[str, float]:
        return {name: float(np.max(np.abs(getattr(self, name).core())))
                for name in ("state", "adjoint", "stationary")}


def pontryagin_residuals(sys: ControlSystem, triple: PontryaginTriple, eps) -> PontryaginResiduals:
    """``box q - d4 H``, ``box p + d2 H`` and ``d3 H`` node-wise."""
    k = _k(eps)
    H = hamiltonian(sys)
    q, u, p = triple.q, triple.u, triple.p
    g = triple.grid
    state = scale_derivative(q, k) - evaluate(H.d4, g, q, u, p)
    adjoint = scale_derivative(p, k) + evaluate(H.d2, g, q, u, p)
    stationary = evaluate(H.d3, g, q, u, p)
    for name, r in (("state", state), ("adjoint", adjoint), ("stationary", stationary)):
        _require_core(r, f"pontryagin {name}", k)
    return PontryaginResiduals(state, adjoint, stationary)


@dataclass
class ReductionCheck:
    p_defined: GridFunction
    adjoint: GridFunction
    el: GridFunction
    el_equiv_gap: float


def reduction_check(L: Lagrangian, q: GridFunction, eps) -> ReductionCheck:
    """With ``phi = u``, ``u = box q`` and ``p = -d3 L`` the adjoint residual is the EL residual."""
    k = _k(eps)
    sys = ControlSystem.reduced(L)
    u = scale_derivative(q, k)
    p = -evaluate(L.d3, q.grid, q, u)
    adjoint = scale_derivative(p, k) + evaluate(hamiltonian(sys).d2, q.grid, q, u, p)
    adjoint = _require_core(adjoint, "reduction_check", k)
    el = el_residual(L, q, k)
    gap = float(np.max(np.abs((adjoint - el).core())))
    return ReductionCheck(p, adjoint, el, gap)


class ControlGenerator:
    """``(tau, xi, rho, sigma)``, each a function of ``(t, q, u, p)``."""

    def __init__(self, tau: Fn, xi: Fn, rho: Fn | None = None, sigma: Fn | None = None,
                 beta: float | None = None, spec: dict | None = None):
        zero = lambda t, q, u, p: np.zeros(np.broadcast(t, q, u, p).shape, dtype=complex)  # noqa: E731
        self.tau, self.xi = tau, xi
        self.rho = rho or zero
        self.sigma = sigma or zero
        self.beta = beta
        self.spec = spec

    @classmethod
    def from_expressions(cls, tau, xi, rho=0, sigma=0, beta=None) -> "ControlGenerator":
        v = ("t", "q", "u", "p")
        forms = [ClosedForm(str(e), v) for e in (tau, xi, rho, sigma)]
        return cls(*forms, beta=beta,
                   spec={"tau": str(tau), "xi": str(xi), "rho": str(rho), "sigma": str(sigma),
                         "beta": beta})

    @classmethod
    def from_dict(cls, d: dict) -> "ControlGenerator":
        return cls.from_expressions(d["tau"], d["xi"], d.get("rho", 0), d.get("sigma", 0),
                                    d.get("beta"))

    def combine(self, a, other: "ControlGenerator", b) -> "ControlGenerator":
        def mix(f, g):
            return lambda t, q, u, p: a * f(t, q, u, p) + b * g(t, q, u, p)
        return ControlGenerator(mix(self.tau, other.tau), mix(self.xi, other.xi),
                                mix(self.rho, other.rho), mix(self.sigma, other.sigma))


def invariance_integrand(sys: ControlSystem, triple: PontryaginTriple, gen: ControlGenerator,
                         eps) -> GridFunction:
    """Invariance integrand of the augmented problem ``int (H - p box q) dt``.

    In the variables ``(q, u, p)`` the augmented Lagrangian depends on the
    velocity only through ``-p box q``, which gives
    ``d1H tau + d2H xi + d3H rho + (phi - box q) sigma - p (box xi - box q box tau)``.
    """
    k = _k(eps)
    H = hamiltonian(sys)
    q, u, p = triple.q, triple.u, triple.p
    g = triple.grid
    v = scale_derivative(q, k)
    tau, xi, rho, sig = (evaluate(f, g, q, u, p) for f in (gen.tau, gen.xi, gen.rho, gen.sigma))
    return (evaluate(H.d1, g, q, u, p) * tau + evaluate(H.d2, g, q, u, p) * xi
            + evaluate(H.d3, g, q, u, p) * rho + (evaluate(H.d4, g, q, u, p) - v) * sig
            - p * (scale_derivative(xi, k) - v * scale_derivative(tau, k)))


def invariance_residual(sys: ControlSystem, triple: PontryaginTriple, gen: ControlGenerator,
                        eps, subintervals: Sequence[tuple[float, float]]) -> list[complex]:
    return integrate_subintervals(invariance_integrand(sys, triple, gen, eps), subintervals)


def hamiltonian_noether_constant(sys: ControlSystem, triple: PontryaginTriple,
                                 gen: ControlGenerator, eps, tol: float | None = None) -> ConstancyReport:
    """``C = H tau - p xi`` along the triple."""
    k = _k(eps)
    tol = 10.0 * k * triple.grid.h * sys.K if tol is None else tol
    res = pontryagin_residuals(sys, triple, k).sup()
    if max(res.values()) > tol:
        warnings.warn(f"triple is not a scale Pontryagin extremal at tol {tol:.3g}: {res}",
                      ExtremalWarning, stacklevel=2)
    H = hamiltonian(sys)
    q, u, p = triple.q, triple.u, triple.p
    series = evaluate(lambda t, qq, uu, pp: H(t, qq, uu, pp) * gen.tau(t, qq, uu, pp)
                      - pp * gen.xi(t, qq, uu, pp), triple.grid, q, u, p)
    return constancy(series)
