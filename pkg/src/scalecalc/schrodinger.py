"""Residual checkers and constants of motion for the scale Schrödinger equations.

Two variants share the flow-velocity relation ``box q = c d(ln Psi)/dq``:

* nonlinear, ``c = -2 i gamma``;
* linear, ``c = -i hbar / m``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import ClassVar, Sequence

import numpy as np
from scipy.special import eval_hermite

from .convergence import parallel_map
from .errors import OffGridError, VanishingWaveFunctionError
from .expr import ClosedForm
from .gridfn import GridFunction, evaluate
from .scale_ops import _k, a_coeff
from .variational import ConstancyReport, constancy


def _complex(x) -> complex:
    """Accept a number or a ``[re, im]`` pair (JSON has no complex type)."""
    if isinstance(x, (list, tuple)):
        re, im = x
        return complex(float(re), float(im))
    return complex(x)


# ---------------------------------------------------------------------------
# wave functions
# ---------------------------------------------------------------------------

class WaveFunction:
    """``Psi(t, q)`` with ``dt``, ``dq`` and ``dqq`` partials."""

    kind: ClassVar[str] = ""
    _registry: ClassVar[dict[str, type]] = {}

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)
        if cls.kind:
            WaveFunction._registry[cls.kind] = cls

    def __call__(self, t, q) -> np.ndarray:
        raise NotImplementedError

    def dt(self, t, q) -> np.ndarray:
        raise NotImplementedError

    def dq(self, t, q) -> np.ndarray:
        raise NotImplementedError

    def dqq(self, t, q) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params()}

    @staticmethod
    def from_dict(d: dict) -> "WaveFunction":
        try:
            cls = WaveFunction._registry[d["kind"]]
        except KeyError:
            raise ValueError(f"unknown wave function kind {d.get('kind')!r}") from None
        return cls.from_params(d.get("params", {}))

    def log_dq(self, t, q) -> np.ndarray:
        """``d(ln Psi)/dq``; raises if Psi vanishes at any probe."""
        psi = np.asarray(self(t, q), dtype=complex)
        _check_nonvanishing(psi)
        return np.asarray(self.dq(t, q), dtype=complex) / psi


def _check_nonvanishing(psi: np.ndarray) -> None:
    bad = (psi == 0) | ~np.isfinite(psi)
    if np.any(bad):
        idx = [tuple(int(i) for i in ix) if psi.ndim > 1 else int(ix[0])
               for ix in np.argwhere(bad)]
        raise VanishingWaveFunctionError(idx)


@dataclass
class PlaneWave(WaveFunction):
    """``amp exp(i (k q - E t / hbar))``; ``k`` may be complex."""

    k: complex = 1.0
    E: float = 0.5
    hbar: float = 1.0
    amp: complex = 1.0
    kind: ClassVar[str] = "plane_wave"

    def __post_init__(self):
        self.k, self.amp = complex(self.k), complex(self.amp)
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")

    def __call__(self, t, q):
        t, q = np.asarray(t, float), np.asarray(q, float)
        return self.amp * np.exp(1j * (self.k * q - self.E / self.hbar * t))

    def dt(self, t, q):
        return (-1j * self.E / self.hbar) * self(t, q)

    def dq(self, t, q):
        return (1j * self.k) * self(t, q)

    def dqq(self, t, q):
        return (1j * self.k) ** 2 * self(t, q)

    def params(self):
        c = lambda z: z.real if z.imag == 0 else [z.real, z.imag]  # noqa: E731
        return {"k": c(self.k), "E": self.E, "hbar": self.hbar, "amp": c(self.amp)}

    @classmethod
    def from_params(cls, p):
        return cls(_complex(p.get("k", 1.0)), float(p.get("E", 0.5)), float(p.get("hbar", 1.0)),
                   _complex(p.get("amp", 1.0)))


@dataclass
class HarmonicEigenstate(WaveFunction):
    """Unnormalized ``H_n(s q) exp(-(s q)^2 / 2) exp(-i E_n t / hbar)``, ``s = sqrt(m omega / hbar)``."""

    n: int = 0
    m: float = 1.0
    omega: float = 1.0
    hbar: float = 1.0
    kind: ClassVar[str] = "harmonic_eigenstate"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError("n must be a non-negative integer")
        if self.m <= 0 or self.omega <= 0 or self.hbar <= 0:
            raise ValueError("m, omega and hbar must be positive")
        self.n = int(self.n)

    @property
    def energy(self) -> float:
        return self.hbar * self.omega * (self.n + 0.5)

    @property
    def _s(self) -> float:
        return float(np.sqrt(self.m * self.omega / self.hbar))

    def _phase(self, t):
        return np.exp(-1j * self.energy / self.hbar * np.asarray(t, float))

    def _spatial(self, q):
        x = self._s * np.asarray(q, float)
        return eval_hermite(self.n, x) * np.exp(-x * x / 2)

    def __call__(self, t, q):
        return self._spatial(q) * self._phase(t)

    def dt(self, t, q):
        return (-1j * self.energy / self.hbar) * self(t, q)

    def dq(self, t, q):
        x = self._s * np.asarray(q, float)
        hm1 = 2 * self.n * eval_hermite(self.n - 1, x) if self.n > 0 else 0.0
        d = (hm1 - x * eval_hermite(self.n, x)) * np.exp(-x * x / 2)
        return self._s * d * self._phase(t)

    def dqq(self, t, q):
        # Hermite equation: psi'' = (x^2 - 2n - 1) psi in x = s q
        x = self._s * np.asarray(q, float)
        return self._s ** 2 * (x * x - 2 * self.n - 1) * self(t, q)

    def params(self):
        return {"n": self.n, "m": self.m, "omega": self.omega, "hbar": self.hbar}

    @classmethod
    def from_params(cls, p):
        return cls(int(p.get("n", 0)), float(p.get("m", 1.0)), float(p.get("omega", 1.0)),
                   float(p.get("hbar", 1.0)))


@dataclass
class TabulatedWave(WaveFunction):
    """``Psi`` on a tensor grid ``t0 + i ht``, ``q0 + j hq``; derivatives by central differences."""

    t0: float
    ht: float
    q0: float
    hq: float
    values: np.ndarray = field(repr=False)
    kind: ClassVar[str] = "tabulated"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 2 or min(self.values.shape) < 3:
            raise ValueError("tabulated wave function needs a 2-D table of at least 3x3 nodes")
        if self.ht <= 0 or self.hq <= 0:
            raise ValueError("grid steps must be positive")
        v = self.values
        self._dt = np.gradient(v, self.ht, axis=0, edge_order=2)
        self._dq = np.gradient(v, self.hq, axis=1, edge_order=2)
        self._dqq = np.gradient(self._dq, self.hq, axis=1, edge_order=2)

    def _index(self, x, x0, hx, n, what):
        pos = (np.asarray(x, float) - x0) / hx
        idx = np.rint(pos).astype(int)
        if np.any(np.abs(pos - idx) > 1e-9) or np.any(idx < 0) or np.any(idx >= n):
            raise OffGridError(f"{what} probe is not a node of the tabulated grid")
        return idx

    def _lookup(self, table, t, q):
        i = self._index(t, self.t0, self.ht, table.shape[0], "t")
        j = self._index(q, self.q0, self.hq, table.shape[1], "q")
        return table[i, j]

    def __call__(self, t, q):
        return self._lookup(self.values, t, q)

    def dt(self, t, q):
        return self._lookup(self._dt, t, q)

    def dq(self, t, q):
        return self._lookup(self._dq, t, q)

    def dqq(self, t, q):
        return self._lookup(self._dqq, t, q)

    def params(self):
        return {"t0": self.t0, "ht": self.ht, "q0": self.q0, "hq": self.hq,
                "re": self.values.real.tolist(), "im": self.values.imag.tolist()}

    @classmethod
    def from_params(cls, p):
        vals = np.asarray(p["re"], float) + 1j * np.asarray(p.get("im", np.zeros_like(p["re"])), float)
        return cls(float(p["t0"]), float(p["ht"]), float(p["q0"]), float(p["hq"]), vals)

    @classmethod
    def sample(cls, psi: WaveFunction, t: np.ndarray, q: np.ndarray) -> "TabulatedWave":
        t, q = np.asarray(t, float), np.asarray(q, float)
        T, Q = np.meshgrid(t, q, indexing="ij")
        return cls(float(t[0]), float(t[1] - t[0]), float(q[0]), float(q[1] - q[0]), psi(T, Q))


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass
class SchrodingerParams:
    """Mass, coupling and potential.  Set ``hbar`` for the linear variant, ``gamma`` for the nonlinear one."""

    m: float = 1.0
    hbar: float | None = None
    gamma: float | None = None
    U: str = "0"
    alpha: str = "0"

    def __post_init__(self):
        if self.m <= 0:
            raise ValueError("m must be positive")
        if self.hbar is not None and self.hbar <= 0:
            raise ValueError("hbar must be positive")
        if self.hbar is None and self.gamma is None:
            raise ValueError("give hbar (linear variant) or gamma (nonlinear variant)")
        self._U = ClosedForm(str(self.U), ("q",))
        self._dU = self._U.diff("q")
        self._alpha = ClosedForm(str(self.alpha), ("q",))

    @property
    def variant(self) -> str:
        return "linear" if self.hbar is not None else "nonlinear"

    def potential(self, q):
        return self._U(np.asarray(q, float))

    def potential_dq(self, q):
        return self._dU(np.asarray(q, float))

    def alpha_fn(self, q):
        return self._alpha(np.asarray(q, float))

    def velocity_coefficient(self, variant: str | None = None) -> complex:
        variant = variant or self.variant
        if variant == "linear":
            if self.hbar is None:
                raise ValueError("linear variant needs hbar")
            return -1j * self.hbar / self.m
        if variant == "nonlinear":
            if self.gamma is None:
                raise ValueError("nonlinear variant needs gamma")
            return -2j * self.gamma
        raise ValueError(f"unknown variant {variant!r}")

    def to_dict(self) -> dict:
        return {"m": self.m, "hbar": self.hbar, "gamma": self.gamma, "U": str(self.U),
                "alpha": str(self.alpha)}

    @classmethod
    def from_dict(cls, d: dict) -> "SchrodingerParams":
        return cls(float(d.get("m", 1.0)),
                   None if d.get("hbar") is None else float(d["hbar"]),
                   None if d.get("gamma") is None else float(d["gamma"]),
                   str(d.get("U", "0")), str(d.get("alpha", "0")))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def flow_velocity(psi: WaveFunction, params: SchrodingerParams, t, q,
                  variant: str | None = None) -> np.ndarray:
    """``c d(ln Psi)/dq`` with ``c = -2 i gamma`` or ``-i hbar / m``."""
    return params.velocity_coefficient(variant) * psi.log_dq(t, q)


def a_eps(q: GridFunction, eps) -> GridFunction:
    """``1/2 [((D+q)^2 - (D-q)^2) - i ((D+q)^2 + (D-q)^2)]``."""
    return a_coeff(q, eps, 2)


@dataclass
class ProbeGrid:
    """Tensor grid of probe points; rows are times, columns positions."""

    t: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        self.t = np.atleast_1d(np.asarray(self.t, float))
        self.q = np.atleast_1d(np.asarray(self.q, float))

    @classmethod
    def over(cls, t0: float, t1: float, nt: int, q0: float, q1: float, nq: int) -> "ProbeGrid":
        return cls(np.linspace(t0, t1, nt), np.linspace(q0, q1, nq))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.t.size, self.q.size)

    def to_dict(self) -> dict:
        return {"t": self.t.tolist(), "q": self.q.tolist()}


@dataclass
class ResidualField:
    probe: ProbeGrid
    values: np.ndarray

    @property
    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "q", "re", "im"])
        for i, t in enumerate(self.probe.t):
            for j, q in enumerate(self.probe.q):
                v = self.values[i, j]
                w.writerow([repr(float(t)), repr(float(q)), repr(float(v.real)), repr(float(v.imag))])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"sup_residual": self.sup, "shape": list(self.values.shape)}


def _rows(fn, probe: ProbeGrid, workers: int | None) -> np.ndarray:
    """Evaluate ``fn(i, t_i, q)`` row by row, in parallel when more than one worker is set."""
    rows = parallel_map(lambda it: fn(it[0], it[1], probe.q), enumerate(probe.t), workers)
    return np.vstack([np.asarray(r, dtype=complex) for r in rows])


def _check_field(psi: WaveFunction, probe: ProbeGrid) -> None:
    T, Q = np.meshgrid(probe.t, probe.q, indexing="ij")
    _check_nonvanishing(np.asarray(psi(T, Q), dtype=complex))


def _a_rows(a, probe: ProbeGrid) -> np.ndarray:
    if isinstance(a, GridFunction):
        return np.array([a(t) for t in probe.t], dtype=complex)
    arr = np.asarray(a, dtype=complex)
    if arr.ndim == 0:
        return np.full(probe.t.size, complex(arr))
    if arr.shape != probe.t.shape:
        raise ValueError(f"a_eps has {arr.size} entries for {probe.t.size} probe times")
    return arr


def nonlinear_pde_residual(psi: WaveFunction, params: SchrodingerParams, probe: ProbeGrid,
                           a, workers: int | None = None) -> ResidualField:
    """``2 i gamma m [-(1/Psi) Psi_q^2 (i gamma + a/2) + Psi_t + (a/2) Psi_qq] - (U + alpha) Psi``.

    ``a`` is a constant, one value per probe time, or a GridFunction read at the probe times.
    """
    if params.gamma is None:
        raise ValueError("nonlinear residual needs gamma")
    _check_field(psi, probe)
    g, m = params.gamma, params.m
    av = _a_rows(a, probe)

    def row(i, t, q):
        P = psi(t, q)
        lhs = 2j * g * m * (-(psi.dq(t, q) ** 2 / P) * (1j * g + av[i] / 2) + psi.dt(t, q)
                            + av[i] / 2 * psi.dqq(t, q))
        return lhs - (params.potential(q) + params.alpha_fn(q)) * P

    return ResidualField(probe, _rows(row, probe, workers))


def linear_pde_residual(psi: WaveFunction, params: SchrodingerParams, probe: ProbeGrid,
                        workers: int | None = None) -> ResidualField:
    """``i hbar Psi_t + (hbar^2 / 2m) Psi_qq - U Psi``."""
    if params.hbar is None:
        raise ValueError("linear residual needs hbar")
    hb, m = params.hbar, params.m

    def row(i, t, q):
        return (1j * hb * psi.dt(t, q) + hb * hb / (2 * m) * psi.dqq(t, q)
                - params.potential(q) * psi(t, q))

    return ResidualField(probe, _rows(row, probe, workers))


def _along(fn, psi: WaveFunction, path: GridFunction) -> GridFunction:
    if not path.is_real(tol=1e-12):
        raise ValueError("the path q(t) must be real-valued")
    ok = path.valid
    _check_nonvanishing(np.asarray(psi(path.grid.nodes[ok], path.values[ok].real), dtype=complex))
    return evaluate(lambda tt, qq: fn(tt, qq.real), path.grid, path)


def constant_ex1(psi: WaveFunction, params: SchrodingerParams, path: GridFunction) -> ConstancyReport:
    """``C(t) = -2 m (gamma d(ln Psi)/dq)^2 + U(q)`` along ``(t, q(t))``."""
    if params.gamma is None:
        raise ValueError("constant_ex1 needs gamma")
    g, m = params.gamma, params.m
    return constancy(_along(lambda t, q: -2 * m * (g * psi.log_dq(t, q)) ** 2 + params.potential(q),
                            psi, path))


def constant_ex2(psi: WaveFunction, params: SchrodingerParams, path: GridFunction) -> ConstancyReport:
    """``C(t) = -(1/2m) (hbar d(ln Psi)/dq)^2 + U(q)`` along ``(t, q(t))``."""
    if params.hbar is None:
        raise ValueError("constant_ex2 needs hbar")
    hb, m = params.hbar, params.m
    return constancy(_along(lambda t, q: -(hb * psi.log_dq(t, q)) ** 2 / (2 * m) + params.potential(q),
                            psi, path))


@dataclass
class SideCondition:
    a_eps: GridFunction
    target: complex
    gap: float

    def holds(self, tol: float = 1e-9) -> bool:
        return self.gap <= tol * max(1.0, abs(self.target))

    def to_dict(self) -> dict:
        return {"target": [self.target.real, self.target.imag], "gap": self.gap,
                "holds": self.holds()}


def linear_side_condition(path: GridFunction, params: SchrodingerParams, eps) -> SideCondition:
    """Compare ``a_eps`` along the path with ``-i hbar / m`` on the core."""
    if params.hbar is None:
        raise ValueError("the linear side condition needs hbar")
    a = a_eps(path, _k(eps))
    target = -1j * params.hbar / params.m
    return SideCondition(a, target, float(np.max(np.abs(a.core() - target))))


def sample_path(grid, fn) -> GridFunction:
    """Sample a real path ``q(t)`` given as a callable on every node."""
    return GridFunction(grid, np.asarray(fn(grid.nodes), dtype=complex))


__all__: Sequence[str] = (
    "WaveFunction", "PlaneWave", "HarmonicEigenstate", "TabulatedWave", "SchrodingerParams",
    "ProbeGrid", "ResidualField", "SideCondition", "flow_velocity", "a_eps",
    "nonlinear_pde_residual", "linear_pde_residual", "constant_ex1", "constant_ex2",
    "linear_side_condition", "sample_path",
)
