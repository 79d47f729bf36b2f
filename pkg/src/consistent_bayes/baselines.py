"""Classical (statistical) Bayesian posterior with additive Gaussian noise.

Used side by side with the consistent posterior on the same prior samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import ForwardModel, RngStream, SampleBatch, as_points, evaluate_batch
from .density import Density, fit_gkde
from .errors import EmptyPosteriorError, InputError
from .metrics import tv_distance_quadrature

__all__ = [
    "LikelihoodSpec",
    "likelihood",
    "statistical_posterior_pdf",
    "statistical_posterior_rejection",
    "pushforward_compare",
]


@dataclass(frozen=True)
class LikelihoodSpec:
    """Datum ``q_hat`` observed as Q(lam) + eta with eta ~ N(0, diag(noise_var))."""

    observed_datum: np.ndarray
    noise_var: np.ndarray
    normalization: Optional[float] = None

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.observed_datum, dtype=float))
        v = np.atleast_1d(np.asarray(self.noise_var, dtype=float))
        if v.shape != q.shape:
            v = np.broadcast_to(v, q.shape).copy()
        if np.any(v <= 0):
            raise InputError("noise variances must be strictly positive")
        object.__setattr__(self, "observed_datum", q)
        object.__setattr__(self, "noise_var", v)

    @classmethod
    def gaussian(cls, q_hat, sigma):
        return cls(q_hat, np.square(np.atleast_1d(np.asarray(sigma, dtype=float))))

    def density_of_residuals(self, qois: np.ndarray) -> np.ndarray:
        resid = self.observed_datum - qois
        log_norm = 0.5 * np.sum(np.log(2.0 * math.pi * self.noise_var))
        return np.exp(-0.5 * np.sum(resid * resid / self.noise_var, axis=1) - log_norm)

    def with_normalization(self, prior_qois) -> "LikelihoodSpec":
        """Attach the Monte Carlo estimate of the evidence int pi(q|lam) dP_prior."""
        q, _ = as_points(prior_qois, self.observed_datum.shape[0])
        z = float(np.mean(self.density_of_residuals(q)))
        return LikelihoodSpec(self.observed_datum, self.noise_var, z)


def likelihood(spec: LikelihoodSpec, model: ForwardModel, lam, q=None):
    """Gaussian density of q_hat - Q(lam); ``q`` reuses precomputed QoIs."""
    pts, single = as_points(lam, model.in_dim)
    if q is None:
        qv = evaluate_batch(model, pts)
    else:
        qv, _ = as_points(q, model.out_dim)
    if qv.shape[1] != spec.observed_datum.shape[0]:
        raise InputError("likelihood datum and model output dimensions differ")
    out = spec.density_of_residuals(qv)
    return float(out[0]) if single else out


def statistical_posterior_pdf(spec: LikelihoodSpec, prior: Density, model: ForwardModel, lam, q=None):
    """prior(lam) * likelihood(lam) / Z; unnormalised when ``spec.normalization`` is unset."""
    pts, single = as_points(lam, model.in_dim)
    out = np.asarray(prior.pdf(pts), dtype=float) * likelihood(spec, model, pts, q=q)
    if spec.normalization is not None:
        out = out / spec.normalization
    return float(out[0]) if single else out


def statistical_posterior_rejection(spec: LikelihoodSpec, model: ForwardModel,
                                    prior_batch: SampleBatch, rng: RngStream) -> SampleBatch:
    """Accept prior rows with probability likelihood / max likelihood over the batch."""
    if prior_batch.count == 0:
        raise InputError("need a nonempty prior batch")
    like = likelihood(spec, model, prior_batch.params, q=prior_batch.qois)
    top = float(np.max(like))
    if not top > 0:
        raise EmptyPosteriorError("the likelihood vanishes on every prior sample")
    xi = rng.generator.random(prior_batch.count)
    return prior_batch.subset(like / top > xi)


def pushforward_compare(model: ForwardModel, consistent_accepted: SampleBatch,
                        statistical_accepted: SampleBatch, observed: Density,
                        bandwidth_rule="silverman", nodes: int = 8193) -> Tuple[float, float]:
    """TV between the observed density and KDEs of each posterior's QoIs."""
    if model.out_dim != 1:
        raise InputError("push-forward comparison is one-dimensional")
    if consistent_accepted.count == 0 or statistical_accepted.count == 0:
        raise InputError("both accepted batches must be nonempty")
    kde_c = fit_gkde(consistent_accepted.qois, bandwidth_rule)
    kde_s = fit_gkde(statistical_accepted.qois, bandwidth_rule)
    tvs = []
    for kde in (kde_c, kde_s):
        lo_k, hi_k = kde.support_interval()
        lo_o, hi_o = observed.support_interval()
        tvs.append(tv_distance_quadrature(kde, observed, (min(lo_k, lo_o), max(hi_k, hi_o)), nodes))
    return tvs[0], tvs[1]
