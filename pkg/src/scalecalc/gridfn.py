"""Uniform grids, sampled complex functions and the analytic test catalog.

A :class:`Grid` is a core interval ``[a, b]`` sampled with step ``h`` plus
``n_pad`` extension nodes on each side, so finite-scale quotients at the
core boundary can read ``f(t +- eps)``.  A :class:`GridFunction` stores one
complex value per node together with a validity mask; samples that were
shifted past the extension are poisoned (NaN + ``valid=False``) and any read
of them raises :class:`~scalecalc.errors.InvalidSampleError`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, ClassVar, Sequence

import numpy as np

from .errors import (
    GridMismatchError,
    InvalidSampleError,
    NonFiniteError,
    OffGridError,
)


@dataclass(frozen=True)
class Grid:
    t0: float
    h: float
    n_core: int
    n_pad: int = 0

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ValueError(f"grid step must be positive, got h={self.h}")
        if self.n_core < 2:
            raise ValueError(f"n_core must be >= 2, got {self.n_core}")
        if self.n_pad < 0:
            raise ValueError(f"n_pad must be >= 0, got {self.n_pad}")

    @classmethod
    def over(cls, a: float, b: float, h: float, n_pad: int = 0) -> "Grid":
        """Grid whose core runs from ``a`` to ``b`` (``b - a`` must be a multiple of ``h``)."""
        steps = (b - a) / h
        n = int(round(steps))
        if abs(steps - n) > 1e-9 * max(1.0, abs(steps)):
            raise OffGridError(f"interval length {b - a} is not a multiple of h={h}")
        return cls(t0=a, h=h, n_core=n + 1, n_pad=n_pad)

    @property
    def size(self) -> int:
        return self.n_core + 2 * self.n_pad

    @property
    def core(self) -> slice:
        return slice(self.n_pad, self.n_pad + self.n_core)

    @property
    def a(self) -> float:
        return self.t0

    @property
    def b(self) -> float:
        return self.t0 + (self.n_core - 1) * self.h

    @cached_property
    def nodes(self) -> np.ndarray:
        t = self.t0 + (np.arange(self.size) - self.n_pad) * self.h
        t.setflags(write=False)
        return t

    @property
    def core_nodes(self) -> np.ndarray:
        return self.nodes[self.core]

    def index_of(self, t: float) -> int:
        """Node index of time ``t``; raises :class:`OffGridError` if ``t`` is not a node."""
        pos = (t - self.t0) / self.h + self.n_pad
        i = int(round(pos))
        if abs(pos - i) > 1e-9 * max(1.0, abs(pos)) or not 0 <= i < self.size:
            raise OffGridError(f"t={t} is not a node of {self}")
        return i

    def to_dict(self) -> dict:
        return {"t0": self.t0, "h": self.h, "n_core": self.n_core, "n_pad": self.n_pad}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(t0=float(d["t0"]), h=float(d["h"]), n_core=int(d["n_core"]),
                   n_pad=int(d.get("n_pad", 0)))


class GridFunction:
    """Complex samples on a :class:`Grid` with an explicit validity mask.

    Values and mask are read-only; every operation returns a new object.
    """

    __slots__ = ("grid", "values", "valid")

    def __init__(self, grid: Grid, values, valid=None):
        vals = np.array(values, dtype=complex)
        if vals.shape != (grid.size,):
            raise ValueError(f"expected {grid.size} values, got shape {vals.shape}")
        if valid is None:
            mask = np.ones(grid.size, dtype=bool)
        else:
            mask = np.array(valid, dtype=bool)
            if mask.shape != vals.shape:
                raise ValueError("validity mask shape does not match values")
        bad = np.flatnonzero(mask & ~np.isfinite(vals))
        if bad.size:
            raise NonFiniteError(int(bad[0]))
        vals[~mask] = np.nan
        vals.setflags(write=False)
        mask.setflags(write=False)
        self.grid = grid
        self.values = vals
        self.valid = mask

    # -- reading ---------------------------------------------------------
    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def at(self, i: int) -> complex:
        if not self.valid[i]:
            raise InvalidSampleError(f"sample {i} (t={self.grid.nodes[i]:g}) is invalid")
        return complex(self.values[i])

    def __call__(self, t: float) -> complex:
        return self.at(self.grid.index_of(t))

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Values at node indices ``lo..hi`` inclusive; every one must be valid."""
        if lo < 0 or hi >= self.grid.size or lo > hi:
            raise InvalidSampleError(f"window [{lo}, {hi}] outside the grid")
        if not self.valid[lo:hi + 1].all():
            first = lo + int(np.argmin(self.valid[lo:hi + 1]))
            raise InvalidSampleError(
                f"sample {first} (t={self.grid.nodes[first]:g}) is invalid")
        return self.values[lo:hi + 1]

    def core(self) -> np.ndarray:
        g = self.grid
        return self.window(g.n_pad, g.n_pad + g.n_core - 1)

    def core_is_valid(self) -> bool:
        return bool(self.valid[self.grid.core].all())

    def valid_range(self) -> tuple[int, int] | None:
        idx = np.flatnonzero(self.valid)
        if idx.size == 0:
            return None
        return int(idx[0]), int(idx[-1])

    def is_real(self, tol: float = 0.0) -> bool:
        v = self.values[self.valid]
        return bool(np.all(np.abs(v.imag) <= tol))

    # -- arithmetic ------------------------------------------------------
    def _check(self, other: "GridFunction"):
        if other.grid != self.grid:
            raise GridMismatchError(f"{self.grid} != {other.grid}")

    def _combine(self, other, op):
        if isinstance(other, GridFunction):
            self._check(other)
            mask = self.valid & other.valid
            with np.errstate(invalid="ignore"):
                vals = op(self.values, other.values)
        else:
            mask = self.valid
            with np.errstate(invalid="ignore"):
                vals = op(self.values, complex(other))
        return GridFunction(self.grid, np.where(mask, vals, np.nan), mask)

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._combine(other, np.divide)

    def __neg__(self):
        return GridFunction(self.grid, -self.values, self.valid)

    def conj(self) -> "GridFunction":
        return GridFunction(self.grid, np.conj(self.values), self.valid)

    @property
    def real(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.real, self.valid)

    @property
    def imag(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.imag, self.valid)

    def shift(self, k: int) -> "GridFunction":
        return shift(self, k)

    def __repr__(self):
        rng = self.valid_range()
        return f"GridFunction({self.grid}, valid={rng})"

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        vals = [[float(v.real), float(v.imag)] if ok else None
                for v, ok in zip(self.values, self.valid)]
        return {"grid": self.grid.to_dict(), "values": vals}

    @classmethod
    def from_dict(cls, d: dict) -> "GridFunction":
        grid = Grid.from_dict(d["grid"])
        raw = d["values"]
        valid = [v is not None for v in raw]
        vals = [complex(v[0], v[1]) if v is not None else complex("nan") for v in raw]
        return cls(grid, vals, valid)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GridFunction":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "t", "re", "im"])
        for i, (t, v, ok) in enumerate(zip(self.grid.nodes, self.values, self.valid)):
            w.writerow([i, repr(float(t)), repr(float(v.real)) if ok else "nan",
                        repr(float(v.imag)) if ok else "nan"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n_pad: int = 0) -> "GridFunction":
        """Parse the ``index,t,re,im`` format; the step is recovered from ``t``.

        ``n_pad`` tells how many leading/trailing rows belong to the extension.
        """
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["index", "t", "re", "im"]:
            raise ValueError("CSV header must be: index,t,re,im")
        body = [r for r in rows[1:] if r]
        if len(body) < 2 + 2 * n_pad:
            raise ValueError("CSV has too few rows for the requested padding")
        t = np.array([float(r[1]) for r in body])
        re = np.array([float(r[2]) for r in body])
        im = np.array([float(r[3]) for r in body])
        steps = np.diff(t)
        h = float(steps.mean())
        if np.max(np.abs(steps - h)) > 1e-9 * max(1.0, abs(h)) * 10:
            raise ValueError("CSV time column is not uniformly spaced")
        n_core = len(body) - 2 * n_pad
        grid = Grid(t0=float(t[n_pad]), h=h, n_core=n_core, n_pad=n_pad)
        vals = re + 1j * im
        return cls(grid, np.where(np.isfinite(vals), vals, np.nan), np.isfinite(vals))


def shift(f: GridFunction, k: int) -> GridFunction:
    """``shift(f, k)`` holds ``f(t + k h)`` at node ``t``; samples past the ends are poisoned."""
    n = f.grid.size
    vals = np.full(n, np.nan, dtype=complex)
    mask = np.zeros(n, dtype=bool)
    if k >= 0:
        if k < n:
            vals[: n - k] = f.values[k:]
            mask[: n - k] = f.valid[k:]
    else:
        if -k < n:
            vals[-k:] = f.values[: n + k]
            mask[-k:] = f.valid[: n + k]
    return GridFunction(f.grid, vals, mask)


def lincomb(coeffs: Sequence[complex], funcs: Sequence[GridFunction]) -> GridFunction:
    if len(coeffs) != len(funcs) or not funcs:
        raise ValueError("need one coefficient per function, at least one function")
    out = funcs[0] * coeffs[0]
    for c, f in zip(coeffs[1:], funcs[1:]):
        out = out + f * c
    return out


def pointwise_mul(f: GridFunction, g: GridFunction) -> GridFunction:
    return f * g


def constant(grid: Grid, c: complex) -> GridFunction:
    return GridFunction(grid, np.full(grid.size, c, dtype=complex))


def evaluate(fn: Callable, grid: Grid, *args) -> GridFunction:
    """Apply ``fn(t, *args)`` node-wise where every GridFunction argument is valid.

    Plain scalars/arrays are broadcast.  Non-finite output at a valid node
    raises :class:`NonFiniteError` naming that node.
    """
    mask = np.ones(grid.size, dtype=bool)
    for a in args:
        if isinstance(a, GridFunction):
            if a.grid != grid:
                raise GridMismatchError(f"{a.grid} != {grid}")
            mask &= a.valid
    idx = np.flatnonzero(mask)
    picked = []
    for a in args:
        if isinstance(a, GridFunction):
            picked.append(a.values[idx])
        elif np.ndim(a) == 0:
            picked.append(a)
        else:
            picked.append(np.asarray(a)[idx])
    out = np.full(grid.size, np.nan, dtype=complex)
    if idx.size:
        with np.errstate(all="ignore"):
            res = np.asarray(fn(grid.nodes[idx], *picked), dtype=complex)
        res = np.broadcast_to(res, idx.shape)
        bad = np.flatnonzero(~np.isfinite(res))
        if bad.size:
            raise NonFiniteError(int(idx[bad[0]]))
        out[idx] = res
    return GridFunction(grid, out, mask)


# ---------------------------------------------------------------------------
# Analytic catalog
# ---------------------------------------------------------------------------

_REGISTRY: dict[str, type] = {}


def _register(cls):
    _REGISTRY[cls.kind] = cls
    return cls


class NotDifferentiableError(ValueError):
    pass


class AnalyticFunction:
    """A closed-form catalog entry evaluable at arbitrary real ``t``."""

    kind: ClassVar[str] = ""
    differentiable: ClassVar[bool] = True

    def __call__(self, t):
        raise NotImplementedError

    def derivative(self, t, order: int = 1):
        raise NotDifferentiableError(f"{self.kind} has no closed-form derivative")

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params()}

    @staticmethod
    def from_dict(d: dict) -> "AnalyticFunction":
        kind = d.get("kind")
        if kind not in _REGISTRY:
            raise ValueError(f"unknown function kind {kind!r}")
        return _REGISTRY[kind](**d.get("params", {}))


@_register
@dataclass(frozen=True)
class Polynomial(AnalyticFunction):
    """``sum(coeffs[i] * t**i)`` (ascending powers)."""

    coeffs: tuple = (0.0,)
    kind: ClassVar[str] = "polynomial"

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        if not self.coeffs or not all(math.isfinite(c) for c in self.coeffs):
            raise ValueError("polynomial needs a finite, non-empty coefficient list")

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(np.asarray(t, float), self.coeffs) + 0j

    def derivative(self, t, order=1):
        c = np.polynomial.polynomial.polyder(self.coeffs, order) if len(self.coeffs) > order else [0.0]
        return np.polynomial.polynomial.polyval(np.asarray(t, float), c) + 0j

    def params(self):
        return {"coeffs": list(self.coeffs)}


@_register
@dataclass(frozen=True)
class Trig(AnalyticFunction):
    """``amp * sin(freq * t + phase)``."""

    amp: float = 1.0
    freq: float = 1.0
    phase: float = 0.0
    kind: ClassVar[str] = "trig"

    def __call__(self, t):
        return self.amp * np.sin(self.freq * np.asarray(t, float) + self.phase) + 0j

    def derivative(self, t, order=1):
        return (self.amp * self.freq ** order
                * np.sin(self.freq * np.asarray(t, float) + self.phase + order * np.pi / 2) + 0j)

    def params(self):
        return {"amp": self.amp, "freq": self.freq, "phase": self.phase}


@_register
@dataclass(frozen=True)
class Exponential(AnalyticFunction):
    """``amp * exp(rate * t)``."""

    amp: float = 1.0
    rate: float = 1.0
    kind: ClassVar[str] = "exponential"

    def __call__(self, t):
        return self.amp * np.exp(self.rate * np.asarray(t, float)) + 0j

    def derivative(self, t, order=1):
        return self.rate ** order * self(t)

    def params(self):
        return {"amp": self.amp, "rate": self.rate}


@_register
@dataclass(frozen=True)
class Cosh(AnalyticFunction):
    """``amp * cosh(rate * t)``; the smooth extremal used throughout the tests."""

    amp: float = 1.0
    rate: float = 1.0
    kind: ClassVar[str] = "cosh"

    def __call__(self, t):
        return self.amp * np.cosh(self.rate * np.asarray(t, float)) + 0j

    def derivative(self, t, order=1):
        fn = np.cosh if order % 2 == 0 else np.sinh
        return self.amp * self.rate ** order * fn(self.rate * np.asarray(t, float)) + 0j

    def params(self):
        return {"amp": self.amp, "rate": self.rate}


@_register
@dataclass(frozen=True)
class Gaussian(AnalyticFunction):
    """``amp * exp(-(t - center)**2 / (2 width**2))``."""

    center: float = 0.0
    width: float = 1.0
    amp: float = 1.0
    kind: ClassVar[str] = "gaussian"

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("gaussian width must be positive")

    def __call__(self, t):
        x = np.asarray(t, float) - self.center
        return self.amp * np.exp(-x * x / (2 * self.width ** 2)) + 0j

    def derivative(self, t, order=1):
        x = np.asarray(t, float) - self.center
        w2 = self.width ** 2
        g = self(t)
        if order == 1:
            return -x / w2 * g
        if order == 2:
            return (x * x / w2 ** 2 - 1 / w2) * g
        raise NotDifferentiableError("gaussian derivatives implemented up to order 2")

    def params(self):
        return {"center": self.center, "width": self.width, "amp": self.amp}


@_register
@dataclass(frozen=True)
class Weierstrass(AnalyticFunction):
    """Truncated ``sum_{n < n_terms} a**n cos(b**n pi t + phase_n)``.

    Hölder exponent ``ln(1/a) / ln(b)``.  ``n_terms=None`` defers the
    truncation to :func:`sample`, which keeps ``b**(n-1) pi <= 1/(10 h)``.
    """

    a: float = 0.5
    b: int = 3
    n_terms: int | None = None
    phases: tuple | None = None
    kind: ClassVar[str] = "weierstrass"
    differentiable: ClassVar[bool] = False

    def __post_init__(self):
        if not 0 < self.a < 1:
            raise ValueError(f"weierstrass needs 0 < a < 1, got {self.a}")
        if int(self.b) != self.b or self.b < 3 or self.b % 2 == 0:
            raise ValueError(f"weierstrass needs an odd integer b >= 3, got {self.b}")
        object.__setattr__(self, "b", int(self.b))
        if self.n_terms is not None and self.n_terms < 1:
            raise ValueError("n_terms must be >= 1")
        if self.phases is not None:
            object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))

    @property
    def holder_exponent(self) -> float:
        return math.log(1 / self.a) / math.log(self.b)

    @staticmethod
    def max_terms(b: int, h: float) -> int:
        n = 1
        while b ** n * math.pi <= 1 / (10 * h):
            n += 1
        return n

    def resolved(self, h: float) -> "Weierstrass":
        limit = self.max_terms(self.b, h)
        if self.n_terms is None:
            return Weierstrass(self.a, self.b, limit, self.phases)
        if self.n_terms > limit:
            raise ValueError(
                f"n_terms={self.n_terms} exceeds the resolvable {limit} terms for h={h}")
        return self

    def __call__(self, t):
        if self.n_terms is None:
            raise ValueError("weierstrass n_terms unresolved; sample it on a grid")
        t = np.asarray(t, float)
        out = np.zeros(t.shape)
        for n in range(self.n_terms):
            ph = self.phases[n % len(self.phases)] if self.phases else 0.0
            out = out + self.a ** n * np.cos(self.b ** n * np.pi * t + ph)
        return out + 0j

    def params(self):
        d = {"a": self.a, "b": self.b, "n_terms": self.n_terms}
        if self.phases is not None:
            d["phases"] = list(self.phases)
        return d


@_register
@dataclass(frozen=True)
class PlanePhase(AnalyticFunction):
    """``exp(i (k q - omega t))``; sampled as a function of ``q`` at fixed time ``at_t``."""

    k: float = 1.0
    E_over_hbar: float = 0.0
    at_t: float = 0.0
    kind: ClassVar[str] = "plane_phase"

    def evaluate2(self, t, q):
        return np.exp(1j * (self.k * np.asarray(q, float) - self.E_over_hbar * np.asarray(t, float)))

    def __call__(self, q):
        return self.evaluate2(self.at_t, q)

    def derivative(self, q, order=1):
        return (1j * self.k) ** order * self(q)

    def params(self):
        return {"k": self.k, "E_over_hbar": self.E_over_hbar, "at_t": self.at_t}


@dataclass(frozen=True)
class Tabulated(AnalyticFunction):
    """Values known only at the nodes of a stored GridFunction."""

    table: GridFunction = field(compare=False)
    kind: ClassVar[str] = "tabulated"
    differentiable: ClassVar[bool] = False

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, float))
        return np.array([self.table(x) for x in t])

    def params(self):
        return {"table": self.table.to_dict()}


def _tabulated_from_params(table):
    return Tabulated(GridFunction.from_dict(table))


_REGISTRY["tabulated"] = _tabulated_from_params  # type: ignore[assignment]


def sample(f: AnalyticFunction, grid: Grid) -> GridFunction:
    """Evaluate ``f`` at every node of ``grid`` (extension included)."""
    if isinstance(f, Weierstrass):
        f = f.resolved(grid.h)
    if isinstance(f, Tabulated):
        if f.table.grid != grid:
            raise GridMismatchError("tabulated function lives on a different grid")
        return f.table
    with np.errstate(all="ignore"):
        vals = np.asarray(f(grid.nodes), dtype=complex)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise NonFiniteError(int(bad[0]), f"{f.kind} is non-finite at node index {int(bad[0])}")
    return GridFunction(grid, vals)
