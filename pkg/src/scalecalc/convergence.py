"""Log-log order fits over geometric eps ladders."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

#: order comparisons pass only when the fit clears the target by this much
ORDER_MARGIN = 0.05
#: sup-residuals at or below this (relative to the data scale) count as exact zeros
EXACT_FLOOR = 1e-12
#: environment variable holding the worker count for ladder sweeps
THREADS_ENV = "SCALECALC_THREADS"

T = TypeVar("T")


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable[..., T], items: Iterable, workers: int | None = None) -> list[T]:
    """Order-preserving map; runs on a thread pool when more than one worker is configured."""
    items = list(items)
    workers = thread_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


@dataclass
class ConvergenceFit:
    eps: list[float]
    sup_residual: list[float]
    fitted_order: float | None
    intercept: float | None = None
    r2: float | None = None
    exact: bool = False
    threshold: float | None = None
    label: str = ""
    extra: dict = field(default_factory=dict)

    def exceeds(self, target: float, margin: float = ORDER_MARGIN) -> bool:
        """True when the residual is o(eps**target): exact, or fitted order >= target + margin."""
        if self.exact:
            return True
        return self.fitted_order is not None and self.fitted_order >= target + margin

    def at_least(self, order: float) -> bool:
        if self.exact:
            return True
        return self.fitted_order is not None and self.fitted_order >= order

    @property
    def passed(self) -> bool | None:
        if self.threshold is None:
            return None
        return self.exceeds(self.threshold)

    def to_dict(self) -> dict:
        d = {
            "label": self.label,
            "fitted_order": self.fitted_order,
            "intercept": self.intercept,
            "r2": self.r2,
            "exact": self.exact,
            "ladder": [{"eps": e, "sup_residual": r}
                       for e, r in zip(self.eps, self.sup_residual)],
        }
        if self.threshold is not None:
            d["threshold"] = self.threshold
            d["passed"] = self.passed
        if self.extra:
            d.update(self.extra)
        return d


def fit_order(eps: Sequence[float], values: Sequence[float], *, floor: float | None = None,
              min_points: int = 4, label: str = "", threshold: float | None = None) -> ConvergenceFit:
    """Least-squares slope of ``log(values)`` against ``log(eps)``.

    ``floor`` is an absolute level below which a residual is roundoff; if every
    value sits under it the fit is marked ``exact`` and no slope is reported.
    """
    eps = [float(e) for e in eps]
    vals = [float(v) for v in values]
    if len(eps) != len(vals):
        raise ValueError("eps and values differ in length")
    if len(eps) < min_points:
        raise ValueError(f"ladder needs at least {min_points} points, got {len(eps)}")
    if any(e <= 0 for e in eps):
        raise ValueError("eps values must be positive")
    if floor is not None and max(vals) <= floor:
        return ConvergenceFit(eps, vals, None, exact=True, label=label, threshold=threshold)
    if min(vals) <= 0:
        # a partially-exact ladder: clip zeros to the floor so the slope stays defined
        tiny = floor if floor else np.finfo(float).tiny
        vals_fit = [max(v, tiny) for v in vals]
    else:
        vals_fit = vals
    x = np.log(eps)
    y = np.log(vals_fit)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ConvergenceFit(eps, vals, float(slope), float(intercept), r2,
                          label=label, threshold=threshold)


def geometric_ladder(k_min: int, n: int = 6, ratio: int = 2) -> list[int]:
    if k_min < 1 or n < 1 or ratio < 2:
        raise ValueError("ladder needs k_min >= 1, n >= 1, ratio >= 2")
    return [k_min * ratio ** j for j in range(n)]


def ladder_fit(sup_at: Callable[[int], float], ks: Sequence[int], h: float, **kw) -> ConvergenceFit:
    """Evaluate ``sup_at(k)`` for every ladder rung ``eps = k h`` and fit the order."""
    return fit_order([k * h for k in ks], parallel_map(sup_at, ks), **kw)
