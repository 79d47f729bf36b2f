"""Scripted numerical experiments, each returning an :class:`ExperimentReport`.

Every run is reproducible from its configuration and seed; the seed is
split into independent streams for prior sampling, dominance probing and
the accept/reject step.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .baselines import LikelihoodSpec, pushforward_compare, statistical_posterior_rejection
from .core import ForwardModel, ParameterDomain, RngStream, evaluate_batch
from .density import Beta, Density, MultivariateStandardNormal, Normal, TruncatedNormal, Uniform, fit_gkde
from .errors import DominanceError, InputError
from .inference import PosteriorHandle, build_pushforward, rejection_sample
from .metrics import ConvergenceRecord, fit_rate, posterior_l1_error, trapezoid, tv_distance_quadrature
from .models import (
    NONLINEAR_DOMAIN,
    QuadraticFormSpec,
    monomial,
    nonlinear_system,
    piecewise_smooth,
    quadratic_chi2,
    quantile_matched_uniform_observed,
)
from .special import chi2_quantile

__all__ = [
    "ExperimentReport",
    "run_pipeline",
    "run_nonlinear_system",
    "run_piecewise",
    "run_chi2_convergence",
    "synthetic_power_law",
    "run_comparison",
    "run_stability_oracle",
    "run_mass_oracle",
    "run_error_bound_oracle",
    "support_gap",
    "DEFAULT_N_GRID",
]

DEFAULT_N_GRID = (100, 316, 1000, 3162, 10000)
_PROBE_COUNT = 1000


@dataclass
class ExperimentReport:
    experiment_id: str
    config: Dict
    seed: int
    diagnostics: Optional[Dict] = None
    tv_pushforward_prior_vs_observed: Optional[float] = None
    tv_pushforward_posterior_vs_observed: Optional[float] = None
    accepted_count: Optional[int] = None
    convergence: List[Dict] = field(default_factory=list)
    extra: Dict = field(default_factory=dict)
    wall_ms: float = 0.0

    def as_dict(self) -> Dict:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        return json.dumps(_jsonable(self.as_dict()), **kwargs)

    def reproducible_view(self) -> Dict:
        """Everything except wall-clock time."""
        d = _jsonable(self.as_dict())
        d.pop("wall_ms")
        return d

    def check_finite(self):
        bad = [k for k, v in _flatten(self.reproducible_view()) if isinstance(v, float) and not math.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite values in report: {bad}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _flatten(d, prefix=""):
    if isinstance(d, dict):
        for k, v in d.items():
            yield from _flatten(v, f"{prefix}{k}.")
    elif isinstance(d, list):
        for i, v in enumerate(d):
            yield from _flatten(v, f"{prefix}{i}.")
    else:
        yield prefix.rstrip("."), d


def support_gap(kde, threshold: float = 1e-6, nodes: Optional[int] = None) -> float:
    """Longest interval strictly inside the sample range where a 1-D KDE is below ``threshold``."""
    q = kde.points[:, 0]
    lo, hi = float(q.min()), float(q.max())
    if nodes is None:
        nodes = max(4097, int(math.ceil((hi - lo) / (0.25 * float(kde.bandwidth[0])))) + 1)
    x = np.linspace(lo, hi, nodes)
    low = np.asarray(kde.pdf(x)) < threshold
    best, start = 0.0, None
    for i, flag in enumerate(low):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            best = max(best, x[i] - x[start - 1])
            start = None
    return float(best)


def _tv_vs_observed(kde, observed, nodes=8193):
    lo_k, hi_k = kde.support_interval()
    lo_o, hi_o = observed.support_interval()
    return tv_distance_quadrature(kde, observed, (min(lo_k, lo_o), max(hi_k, hi_o)), nodes)


def run_pipeline(experiment_id: str, model: ForwardModel, prior: Density, observed: Density,
                 count: int, seed: int, bandwidth_rule="silverman", safety_factor: float = 1.0,
                 workers: int = 1, config: Optional[Dict] = None):
    """Push-forward, diagnostics, rejection and push-forward comparison for a scalar QoI.

    Returns the report together with the handle, prior batch and accepted batch.
    """
    t0 = time.perf_counter()
    root = RngStream(seed)
    sample_rng, probe_rng, accept_rng = root.spawn(3)
    kde, batch = build_pushforward(model, prior, count, sample_rng, bandwidth_rule, workers=workers)
    handle = PosteriorHandle(prior, observed, kde, model)
    probe = observed.sample(_PROBE_COUNT, probe_rng) if observed.sampleable else None
    accepted, diag = rejection_sample(handle, batch, accept_rng, safety_factor, probe=probe)
    report = ExperimentReport(experiment_id, dict(config or {}), seed, diagnostics=diag.as_dict(),
                              accepted_count=accepted.count)
    if model.out_dim == 1:
        report.tv_pushforward_prior_vs_observed = _tv_vs_observed(kde, observed)
        if accepted.count >= 2 and np.ptp(accepted.qois[:, 0]) > 0:
            post_kde = fit_gkde(accepted.qois, bandwidth_rule)
            report.tv_pushforward_posterior_vs_observed = _tv_vs_observed(post_kde, observed)
        report.extra["bandwidth"] = float(kde.bandwidth[0])
    report.wall_ms = 1e3 * (time.perf_counter() - t0)
    return report, handle, batch, accepted


NONLINEAR_OBSERVED = (0.3, 0.025)


def nonlinear_prior(kind: str) -> Density:
    lo, hi = NONLINEAR_DOMAIN.lower, NONLINEAR_DOMAIN.upper
    if kind == "uniform":
        return Uniform(lo, hi)
    if kind in ("beta25", "beta"):
        return Beta(2.0, 5.0, lo, hi)
    raise InputError(f"unknown prior kind {kind!r}; use 'uniform' or 'beta25'")


def run_nonlinear_system(prior_kind: str = "uniform", M: int = 10_000, seed: int = 0,
                         bandwidth_rule="silverman", workers: int = 1) -> ExperimentReport:
    """Nonlinear 2x2 system with observed N(0.3, 0.025^2) on x2."""
    if M < 100:
        raise InputError("M must be at least 100")
    prior = nonlinear_prior(prior_kind)
    observed = Normal(*NONLINEAR_OBSERVED)
    config = {"model": "nonlinear-system", "prior": prior_kind, "observed": "normal(0.3, 0.025)",
              "M": M, "bandwidth_rule": bandwidth_rule}
    report, *_ = run_pipeline("nonlinear-system", nonlinear_system(), prior, observed, M, seed,
                              bandwidth_rule, workers=workers, config=config)
    return report


def run_piecewise(M: int = 10_000, seed: int = 0, observed_mean: float = -2.0, observed_std: float = 0.25,
                  bandwidth_rule="lcv", workers: int = 1) -> ExperimentReport:
    """Discontinuous piecewise map on [-1, 1]^2, observed N(-2, 0.25^2).

    The push-forward of the prior has a disconnected support; the default
    cross-validated bandwidth keeps the KDE from filling the gaps.
    """
    model = piecewise_smooth(2)
    prior = Uniform([-1.0, -1.0], [1.0, 1.0])
    observed = Normal(observed_mean, observed_std)
    config = {"model": "piecewise-2d", "prior": "uniform", "observed": f"normal({observed_mean}, {observed_std})",
              "M": M, "bandwidth_rule": bandwidth_rule}
    report, handle, _, _ = run_pipeline("piecewise-2d", model, prior, observed, M, seed, bandwidth_rule,
                                        workers=workers, config=config)
    report.extra["support_gap"] = support_gap(handle.pushforward)
    return report


def _convergence_rep(d, m, n_grid, eval_count, rule, variant, rng):
    matrix_seed = int(rng.generator.integers(2**63))
    spec = QuadraticFormSpec.random(d, m, matrix_seed)
    model, exact = quadratic_chi2(spec)
    prior = spec.prior()
    observed = quantile_matched_uniform_observed(d, m, variant)
    eval_q = evaluate_batch(model, prior.sample(eval_count, rng))
    errs = []
    for n in n_grid:
        q = evaluate_batch(model, prior.sample(n, rng))
        errs.append(posterior_l1_error(exact, fit_gkde(q, rule), observed, eval_q))
    return errs


def run_chi2_convergence(dims: Sequence[int] = (2, 10, 100), qoi_counts: Sequence[int] = (1,),
                         N_grid: Sequence[int] = DEFAULT_N_GRID, reps: int = 20, seed: int = 0,
                         bandwidth_rule="silverman", block_variant: str = "mass-preserving",
                         eval_count: int = 10_000, workers: int = 1) -> List[ConvergenceRecord]:
    """Median posterior L1 error against KDE sample size for every (d, m) pair.

    Each repetition draws a fresh covariance, a fresh set of ``eval_count``
    prior samples for the error estimate and fresh KDE samples for every N.
    Pairs with ``d`` not divisible by ``m`` are skipped.
    """
    reps = int(reps)
    if reps < 1:
        raise InputError("reps must be positive")
    n_grid = [int(n) for n in N_grid]
    if any(n < 2 for n in n_grid):
        raise InputError("every N must be at least 2")
    pairs = [(int(d), int(m)) for d in dims for m in qoi_counts if int(d) % int(m) == 0]
    if not pairs:
        raise InputError("no (d, m) pair with d divisible by m")
    streams = RngStream(seed).spawn(len(pairs))
    records = []
    for (d, m), stream in zip(pairs, streams):
        rep_streams = stream.spawn(reps)
        job = lambda r: _convergence_rep(d, m, n_grid, eval_count, bandwidth_rule, block_variant, r)  # noqa: E731
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                raw = list(pool.map(job, rep_streams))
        else:
            raw = [job(r) for r in rep_streams]
        raw = np.array(raw)
        record = ConvergenceRecord(n_grid, np.median(raw, axis=0).tolist(), reps, d, m, raw_errors=raw)
        if len(n_grid) >= 3:
            fit_rate(record)
        records.append(record)
    return records


def synthetic_power_law(N_grid: Sequence[int] = DEFAULT_N_GRID, rate: float = -0.4,
                        scale: float = 1.0) -> ConvergenceRecord:
    """Exact power-law record; its fitted slope must equal ``rate``."""
    n = np.asarray(N_grid, dtype=float)
    record = ConvergenceRecord([int(v) for v in N_grid], (scale * n**rate).tolist(), 1)
    fit_rate(record)
    return record


def run_comparison(p: int = 1, M: int = 100_000, seed: int = 0, q_hat: float = 0.25, sigma: float = 0.1,
                   bandwidth_rule="silverman") -> ExperimentReport:
    """Consistent versus statistical posterior for q = lam**p on shared prior samples.

    The observed density is N(q_hat, sigma^2) cut to [-1, 1] without
    renormalisation; the statistical likelihood uses noise N(0, sigma^2).
    """
    t0 = time.perf_counter()
    model = monomial(p)
    prior = Uniform([-1.0], [1.0])
    observed = TruncatedNormal(q_hat, sigma, -1.0, 1.0, renormalize=False)
    root = RngStream(seed)
    sample_rng, accept_rng, stat_rng = root.spawn(3)
    kde, batch = build_pushforward(model, prior, M, sample_rng, bandwidth_rule)
    handle = PosteriorHandle(prior, observed, kde, model)
    accepted, diag = rejection_sample(handle, batch, accept_rng)
    like = LikelihoodSpec.gaussian(q_hat, sigma).with_normalization(batch.qois)
    stat_accepted = statistical_posterior_rejection(like, model, batch, stat_rng)
    tv_c, tv_s = pushforward_compare(model, accepted, stat_accepted, observed, bandwidth_rule)
    post_c = fit_gkde(accepted.params, bandwidth_rule)
    post_s = fit_gkde(stat_accepted.params, bandwidth_rule)
    tv_posteriors = tv_distance_quadrature(post_c, post_s, (-1.0 - 8 * post_c.bandwidth[0], 1.0 + 8 * post_c.bandwidth[0]), 8193)
    report = ExperimentReport(
        "comparison", {"p": p, "M": M, "q_hat": q_hat, "sigma": sigma, "bandwidth_rule": bandwidth_rule}, seed,
        diagnostics=diag.as_dict(),
        tv_pushforward_prior_vs_observed=_tv_vs_observed(kde, observed),
        tv_pushforward_posterior_vs_observed=tv_c,
        accepted_count=accepted.count,
    )
    report.extra.update({
        "tv_consistent": tv_c,
        "tv_statistical": tv_s,
        "tv_posteriors": tv_posteriors,
        "statistical_accepted_count": stat_accepted.count,
        "evidence": like.normalization,
    })
    report.wall_ms = 1e3 * (time.perf_counter() - t0)
    return report


def square_model() -> ForwardModel:
    """q = lam**2 on the real line; under N(0, 1) its push-forward is chi-squared(1)."""
    return ForwardModel("square", 1, 1, lambda x: x * x, lambda x: x * x, ParameterDomain.unbounded(1))


def _stability_tvs(a, b, delta, nodes):
    from .density import ChiSquared, UniformInterval

    model = square_model()
    prior = Normal(0.0, 1.0)
    exact = ChiSquared(1)
    obs = UniformInterval(a, b)
    obs2 = UniformInterval(a + delta, b + delta)
    probe = np.linspace(a + delta, b + delta, 257)
    if np.any(np.asarray(exact.pdf(probe)) <= 0):
        raise DominanceError(f"perturbed interval [{a + delta:.4g}, {b + delta:.4g}] leaves the push-forward support")
    breaks_q = sorted({a, b, a + delta, b + delta})
    tv_obs = tv_distance_quadrature(obs, obs2, (breaks_q[0], breaks_q[-1]), nodes, breaks_q)
    h1 = PosteriorHandle(prior, obs, exact, model)
    h2 = PosteriorHandle(prior, obs2, exact, model)
    roots = [math.sqrt(v) for v in breaks_q]
    breaks_l = sorted({-r for r in roots} | set(roots) | {0.0})
    reach = roots[-1]
    tv_post = tv_distance_quadrature(lambda x: h1.posterior_pdf(x), lambda x: h2.posterior_pdf(x),
                                     (-reach, reach), nodes, breaks_l)
    return tv_obs, tv_post


def run_stability_oracle(delta: float = 0.05, seed: int = 0, nodes: int = 4097) -> ExperimentReport:
    """TV between two exact posteriors versus TV between their observed densities.

    Model q = lam**2 with a standard-normal prior, so the push-forward is
    chi-squared(1). The observed density is uniform on the chi-squared(1)
    0.4/0.6 quantile interval and its shift by ``delta``. Both distances are
    computed by quadrature with panel edges at every discontinuity; the run
    is repeated with doubled nodes to bound the quadrature error.
    """
    t0 = time.perf_counter()
    a, b = chi2_quantile(1, 0.4), chi2_quantile(1, 0.6)
    tv_obs, tv_post = _stability_tvs(a, b, delta, nodes)
    tv_obs2, tv_post2 = _stability_tvs(a, b, delta, 2 * nodes - 1)
    report = ExperimentReport("stability", {"delta": delta, "nodes": nodes, "interval": [a, b]}, seed)
    report.extra.update({
        "tv_obs_pair": tv_obs,
        "tv_post_pair": tv_post,
        "difference": abs(tv_post - tv_obs),
        "node_doubling_change": max(abs(tv_obs2 - tv_obs), abs(tv_post2 - tv_post)),
    })
    report.wall_ms = 1e3 * (time.perf_counter() - t0)
    return report


def _grid_integral(values, x):
    return trapezoid([trapezoid(row, x) for row in values], x)


def run_mass_oracle(nodes: int = 2001, half_width: float = 6.0) -> float:
    """Tensor trapezoid of the exact chi-squared(2) posterior over [-w, w]^2.

    Prior N(0, I_2), model |lam|^2, observed uniform on the 0.4/0.6 quantiles.
    """
    spec = QuadraticFormSpec.identity(2)
    model, exact = quadratic_chi2(spec)
    handle = PosteriorHandle(MultivariateStandardNormal(2), quantile_matched_uniform_observed(2, 1), exact, model)
    x = np.linspace(-half_width, half_width, nodes)
    gx, gy = np.meshgrid(x, x, indexing="ij")
    vals = handle.posterior_pdf(np.column_stack([gx.ravel(), gy.ravel()])).reshape(nodes, nodes)
    return _grid_integral(vals, x)


def run_error_bound_oracle(seed: int = 0, N: int = 1000, grid_nodes: int = 801, q_nodes: int = 16385,
                           half_width: float = 6.0) -> Dict:
    """Posterior TV against C times push-forward TV for a KDE push-forward.

    Setup: prior N(0, I_2), q = |lam|^2, exact push-forward chi-squared(2),
    KDE built from ``N`` prior samples, observed uniform on the 0.4/0.6
    quantiles. The posterior distance is a 2-D tensor trapezoid over
    parameter space; the push-forward distance and the constant
    C = max obs / KDE are taken on a fine grid in QoI space.
    """
    spec = QuadraticFormSpec.identity(2)
    model, exact = quadratic_chi2(spec)
    prior = MultivariateStandardNormal(2)
    observed = quantile_matched_uniform_observed(2, 1)
    kde, _ = build_pushforward(model, prior, N, RngStream(seed))
    exact_h = PosteriorHandle(prior, observed, exact, model)
    approx_h = PosteriorHandle(prior, observed, kde, model)

    x = np.linspace(-half_width, half_width, grid_nodes)
    gx, gy = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    q = evaluate_batch(model, pts)
    diff = np.abs(exact_h.posterior_pdf(pts, q=q) - approx_h.posterior_pdf(pts, q=q))
    tv_post = _grid_integral(diff.reshape(grid_nodes, grid_nodes), x)

    lo, hi = kde.support_interval()
    lo, hi = min(lo, 0.0), max(hi, exact.support_interval()[1])
    tv_pf = tv_distance_quadrature(kde, exact, (lo, hi), q_nodes, breakpoints=[0.0])
    qs = np.linspace(observed.a, observed.b, q_nodes)
    const = float(np.max(np.asarray(observed.pdf(qs)) / np.asarray(kde.pdf(qs))))
    return {"seed": seed, "tv_post": tv_post, "tv_pushforward": tv_pf, "constant": const,
            "bound": const * tv_pf}
