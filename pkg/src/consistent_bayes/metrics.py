"""Distances between densities and convergence-rate fitting.

Total variation here is the plain L1 distance between densities,
``d_TV(p, q) = int |p - q|``, without the usual factor 1/2. Two densities
with disjoint supports are at distance 2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .errors import InputError, UnsupportedError

__all__ = [
    "trapezoid",
    "tv_distance_quadrature",
    "tv_distance_mc",
    "posterior_l1_error",
    "ConvergenceRecord",
    "fit_rate",
]


def trapezoid(y, x) -> float:
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def _as_callable(d):
    if hasattr(d, "pdf"):
        if getattr(d, "dim", 1) != 1:
            raise UnsupportedError("quadrature TV is one-dimensional; use tv_distance_mc")
        return d.pdf
    if callable(d):
        return d
    raise InputError("expected a density or a callable")


def _union_support(*densities):
    lo, hi = np.inf, -np.inf
    for d in densities:
        if not hasattr(d, "support_interval"):
            raise InputError("support must be given when passing plain callables")
        a, b = d.support_interval()
        lo, hi = min(lo, a), max(hi, b)
    return lo, hi


def piecewise_trapezoid(f: Callable, support, nodes: int, breakpoints: Sequence[float] = ()) -> float:
    """Composite trapezoid of ``f`` with extra panel edges at ``breakpoints``.

    Each panel is sampled a hair inside its end points, so a jump sitting on
    a breakpoint is integrated from the correct side.
    """
    lo, hi = float(support[0]), float(support[1])
    if not hi > lo:
        raise InputError("support must satisfy lo < hi")
    cuts = sorted({lo, hi, *(float(b) for b in breakpoints if lo < b < hi)})
    total = 0.0
    span = hi - lo
    for a, b in zip(cuts[:-1], cuts[1:]):
        n = max(16, int(round(nodes * (b - a) / span)) + 1)
        x = np.linspace(a, b, n)
        xe = x.copy()
        nudge = 1e-12 * max(1.0, abs(a), abs(b))
        xe[0] = min(a + nudge, 0.5 * (a + b))
        xe[-1] = max(b - nudge, 0.5 * (a + b))
        total += trapezoid(np.asarray(f(xe), dtype=float), x)
    return total


def tv_distance_quadrature(p, q, support=None, nodes: int = 4097,
                           breakpoints: Sequence[float] = ()) -> float:
    """int |p - q| over ``support`` by the composite trapezoid rule.

    ``p`` and ``q`` are 1-D densities or vectorised callables. Without an
    explicit support the union of both densities' 1e-10 tail intervals is
    used. ``breakpoints`` should list known discontinuities.
    """
    if nodes < 64:
        raise InputError("need at least 64 quadrature nodes")
    fp, fq = _as_callable(p), _as_callable(q)
    if support is None:
        support = _union_support(p, q)
    return piecewise_trapezoid(lambda x: np.abs(fp(x) - fq(x)), support, nodes, breakpoints)


def tv_distance_mc(p_pdf: Callable, q_pdf: Callable, sampler, batch) -> float:
    """Importance-sampling estimate (1/M) sum |p(x_i) - q(x_i)| / s(x_i).

    ``batch`` must be drawn from ``sampler``, whose support has to cover
    both densities.
    """
    x = np.asarray(batch, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.shape[0] == 0:
        raise InputError("empty batch")
    s = np.asarray(sampler.pdf(x), dtype=float)
    if np.any(s <= 0):
        raise InputError("sampler density vanishes at a batch point")
    diff = np.abs(np.asarray(p_pdf(x), dtype=float) - np.asarray(q_pdf(x), dtype=float))
    return float(np.mean(diff / s))


def posterior_l1_error(exact_pf, approx_pf, observed, qois, ratio_floor: float = 1e-12,
                       return_violations: bool = False):
    """Monte Carlo L1 distance between posteriors built from two push-forwards.

    (1/N) sum_i |obs(q_i)/exact(q_i) - obs(q_i)/approx(q_i)| over QoIs of
    prior samples. Denominators are floored at ``ratio_floor``; with
    ``return_violations=True`` the number of floored values is returned too.
    """
    q = np.asarray(qois, dtype=float)
    if q.ndim == 1:
        q = q.reshape(-1, 1)
    if q.shape[0] == 0:
        raise InputError("need at least one QoI sample")
    obs = np.asarray(observed.pdf(q), dtype=float)
    live = obs > 0
    total, violations = 0.0, 0
    if np.any(live):
        ql, ol = q[live], obs[live]
        e = np.asarray(exact_pf.pdf(ql), dtype=float)
        a = np.asarray(approx_pf.pdf(ql), dtype=float)
        violations = int(np.count_nonzero(e <= ratio_floor) + np.count_nonzero(a <= ratio_floor))
        total = float(np.sum(np.abs(ol / np.maximum(e, ratio_floor) - ol / np.maximum(a, ratio_floor))))
    err = total / q.shape[0]
    return (err, violations) if return_violations else err


@dataclass
class ConvergenceRecord:
    """Median errors against sample size for one (d, m) configuration."""

    sample_sizes: List[int]
    errors: List[float]
    repetitions: int = 1
    dim: Optional[int] = None
    qoi_count: Optional[int] = None
    fitted_slope: Optional[float] = None
    raw_errors: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        n = np.asarray(self.sample_sizes, dtype=float)
        e = np.asarray(self.errors, dtype=float)
        if n.shape != e.shape or n.ndim != 1:
            raise InputError("sample_sizes and errors must be matching 1-D lists")
        if np.any(np.diff(n) <= 0):
            raise InputError("sample sizes must be strictly increasing")
        if np.any(~np.isfinite(e)) or np.any(e <= 0):
            raise InputError("errors must be finite and positive")


def fit_rate(record: Union[ConvergenceRecord, Sequence]) -> float:
    """Least-squares slope of log(error) against log(N); stored on the record."""
    if not isinstance(record, ConvergenceRecord):
        record = ConvergenceRecord(*record)
    if len(record.sample_sizes) < 3:
        raise InputError("need at least 3 points to fit a convergence rate")
    slope, _ = np.polyfit(np.log(np.asarray(record.sample_sizes, dtype=float)),
                          np.log(np.asarray(record.errors, dtype=float)), 1)
    record.fitted_slope = float(slope)
    return float(slope)
