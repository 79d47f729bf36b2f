"""Consistent Bayesian inversion: push-forward, posterior ratio, diagnostics, rejection.

The posterior is ``pi_post(lam) = pi_prior(lam) * r(Q(lam))`` with
``r(q) = pi_obs(q) / pi_pf(q)``, where ``pi_pf`` is the density of ``Q``
under the prior. Everything that integrates against the prior reuses the
QoIs already computed for the push-forward estimate.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from .core import ForwardModel, ParameterDomain, RngStream, SampleBatch, as_points, evaluate_batch
from .density import Density, GaussianKDE, fit_gkde
from .errors import (
    EmptyPosteriorError,
    InputError,
    InsufficientCoverageError,
    UnsupportedError,
)
from .metrics import trapezoid

__all__ = [
    "DEFAULT_RATIO_FLOOR",
    "PosteriorHandle",
    "Diagnostics",
    "build_pushforward",
    "diagnostics",
    "rejection_sample",
    "set_posterior_probability",
]

DEFAULT_RATIO_FLOOR = 1e-12


@dataclass(frozen=True)
class Diagnostics:
    """Summary of r(Q(lam)) over a prior sample.

    ``integral_estimate`` should be close to one when the observed density
    is dominated by the push-forward; ``dominance_violations`` counts points
    where the observed density is positive but the push-forward is at or
    below the ratio floor.
    """

    integral_estimate: float
    kl_divergence: float
    max_ratio: float
    sample_count: int
    dominance_violations: int = 0
    acceptance_rate: Optional[float] = None
    accepted_count: Optional[int] = None

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class PosteriorHandle:
    """Prior, observed density, push-forward estimate and model bound together."""

    prior: Density
    observed: Density
    pushforward: Density
    model: ForwardModel
    ratio_floor: float = DEFAULT_RATIO_FLOOR

    def __post_init__(self):
        if self.prior.dim != self.model.in_dim:
            raise InputError(f"prior has dim {self.prior.dim}, model expects {self.model.in_dim}")
        if self.observed.dim != self.model.out_dim or self.pushforward.dim != self.model.out_dim:
            raise InputError("observed and push-forward densities must match the model output dimension")
        if not self.ratio_floor > 0:
            raise InputError("ratio_floor must be positive")

    def ratio_and_violations(self, q) -> Tuple[np.ndarray, int]:
        """r at each row of ``q`` plus the number of floored push-forward values."""
        pts, _ = as_points(q, self.model.out_dim)
        if self.observed is self.pushforward:
            # identical densities: r == 1 even where both underflow
            return np.ones(pts.shape[0]), 0
        obs = np.asarray(self.observed.pdf(pts), dtype=float)
        r = np.zeros(pts.shape[0])
        live = obs > 0
        if not np.any(live):
            return r, 0
        pf = np.asarray(self.pushforward.pdf(pts[live]), dtype=float)
        floored = pf <= self.ratio_floor
        r[live] = obs[live] / np.maximum(pf, self.ratio_floor)
        return r, int(np.count_nonzero(floored))

    def ratio(self, q):
        """r(q) = pi_obs(q) / max(pi_pf(q), floor); zero wherever pi_obs(q) = 0."""
        _, single = as_points(q, self.model.out_dim)
        r, _ = self.ratio_and_violations(q)
        return float(r[0]) if single else r

    def posterior_pdf(self, lam, q=None, workers: int = 1):
        """pi_prior(lam) * r(Q(lam)).

        Pass ``q`` to reuse QoIs that were already computed; otherwise the
        model is evaluated once per point. Points with zero prior density
        are not sent to the model.
        """
        pts, single = as_points(lam, self.model.in_dim)
        prior = np.asarray(self.prior.pdf(pts), dtype=float)
        out = np.zeros(pts.shape[0])
        live = prior > 0
        if np.any(live):
            if q is None:
                qv = evaluate_batch(self.model, pts[live], workers=workers)
            else:
                qv, _ = as_points(q, self.model.out_dim)
                if qv.shape[0] != pts.shape[0]:
                    raise InputError("cached QoIs must have one row per parameter point")
                qv = qv[live]
            r, _ = self.ratio_and_violations(qv)
            out[live] = prior[live] * r
        return float(out[0]) if single else out


def build_pushforward(model: ForwardModel, prior: Density, count: int, rng: RngStream,
                      bandwidth_rule="silverman", workers: int = 1,
                      domain: Optional[ParameterDomain] = None,
                      kde_method: str = "auto") -> Tuple[GaussianKDE, SampleBatch]:
    """Sample the prior, push the samples through the model, fit a KDE to the QoIs.

    Returns the KDE and the batch of (parameter, QoI) pairs so later steps
    can reuse the model evaluations.
    """
    count = int(count)
    if count < 2:
        raise InputError("need at least 2 prior samples")
    if prior.dim != model.in_dim:
        raise InputError(f"prior has dim {prior.dim}, model expects {model.in_dim}")
    params = prior.sample(count, rng)
    qois = evaluate_batch(model, params, workers=workers)
    batch = SampleBatch(params, qois, seed=rng.seed or 0, model_name=model.name,
                        domain=domain if domain is not None else model.domain)
    kde = fit_gkde(qois, bandwidth_rule, method=kde_method)
    return kde, batch


def _summarise(r: np.ndarray, violations: int) -> Diagnostics:
    pos = r > 0
    kl = float(np.sum(r[pos] * np.log(r[pos])) / r.shape[0])
    return Diagnostics(
        integral_estimate=float(np.mean(r)),
        kl_divergence=kl,
        max_ratio=float(np.max(r)),
        sample_count=int(r.shape[0]),
        dominance_violations=int(violations),
    )


def diagnostics(handle: PosteriorHandle, batch: SampleBatch, probe=None) -> Diagnostics:
    """Mass, KL divergence and max ratio estimated from a prior batch.

    ``probe`` optionally lists extra QoI points (e.g. draws from the observed
    density) where dominance is checked; violations there are added to
    those found on the batch itself.
    """
    if batch.count == 0:
        raise InputError("diagnostics need a nonempty batch")
    r, violations = handle.ratio_and_violations(batch.qois)
    if probe is not None:
        _, extra = handle.ratio_and_violations(probe)
        violations += extra
    return _summarise(r, violations)


def rejection_sample(handle: PosteriorHandle, batch: SampleBatch, rng: RngStream,
                     safety_factor: float = 1.0, probe=None) -> Tuple[SampleBatch, Diagnostics]:
    """Accept prior samples with probability r(q_p) / (safety_factor * max r).

    Accepted rows keep their original order.
    """
    if batch.count == 0:
        raise InputError("rejection sampling needs a nonempty batch")
    if safety_factor < 1.0:
        raise InputError("safety_factor below 1 would clip the acceptance probability")
    r, violations = handle.ratio_and_violations(batch.qois)
    if probe is not None:
        _, extra = handle.ratio_and_violations(probe)
        violations += extra
    bound = float(np.max(r)) * safety_factor
    if not bound > 0:
        raise EmptyPosteriorError("every ratio is zero; the observed density misses the push-forward support")
    xi = rng.generator.random(batch.count)
    keep = r / bound > xi
    accepted = batch.subset(keep)
    diag = _summarise(r, violations)
    diag = Diagnostics(**{**diag.as_dict(),
                          "acceptance_rate": accepted.count / batch.count,
                          "accepted_count": accepted.count})
    return accepted, diag


def _interval_probability(density: Density, lo: float, hi: float, nodes: int) -> float:
    if hi <= lo:
        return 0.0
    x = np.linspace(lo, hi, nodes)
    return trapezoid(np.asarray(density.pdf(x), dtype=float), x)


def set_posterior_probability(handle: PosteriorHandle, lower, upper, batch: SampleBatch,
                              min_rows: int = 100, nodes: int = 4097) -> float:
    """P_prior(B) * P_obs(Q(B)) / P_pf(Q(B)) for the box B = [lower, upper].

    P_prior(B) is the fraction of batch rows inside B. The image Q(B) is
    approximated by the interval [min, max] of those rows' QoIs, so this is
    only available for a scalar QoI.
    """
    if handle.model.out_dim != 1:
        raise UnsupportedError("set-based posterior probabilities need a scalar QoI")
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (handle.model.in_dim,))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (handle.model.in_dim,))
    if np.any(lower >= upper):
        return 0.0
    inside = np.all((batch.params >= lower) & (batch.params <= upper), axis=1)
    n_in = int(np.count_nonzero(inside))
    if n_in == 0:
        return 0.0
    if n_in < min_rows:
        raise InsufficientCoverageError(f"only {n_in} samples fall in the box, need {min_rows}")
    p_prior = n_in / batch.count
    q = batch.qois[inside, 0]
    lo, hi = float(q.min()), float(q.max())
    p_obs = _interval_probability(handle.observed, lo, hi, nodes)
    if p_obs == 0.0:
        return 0.0
    p_pf = _interval_probability(handle.pushforward, lo, hi, nodes)
    if p_pf <= 0:
        raise InsufficientCoverageError("push-forward assigns no mass to the image interval")
    return float(min(1.0, p_prior * p_obs / p_pf))
