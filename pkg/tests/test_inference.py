import math

import numpy as np
import pytest

from consistent_bayes import (
    ChiSquared,
    DegenerateDataError,
    EmptyPosteriorError,
    ForwardModel,
    InputError,
    InsufficientCoverageError,
    MultivariateStandardNormal,
    Normal,
    PosteriorHandle,
    RngStream,
    SampleBatch,
    TruncatedNormal,
    Uniform,
    UniformInterval,
    UnsupportedError,
    build_pushforward,
    diagnostics,
    rejection_sample,
    set_posterior_probability,
)
from consistent_bayes.metrics import trapezoid
from consistent_bayes.models import QuadraticFormSpec, get_model, monomial, quadratic_chi2, quantile_matched_uniform_observed

from conftest import ks_statistic


@pytest.fixture(scope="module")
def identity_setup():
    """Monomial p=1 with a uniform prior on [-1, 1], M=1e5."""
    model = monomial(1)
    prior = Uniform([-1.0], [1.0])
    kde, batch = build_pushforward(model, prior, 100_000, RngStream(21))
    observed = TruncatedNormal(0.25, 0.1, -1.0, 1.0)
    return model, prior, kde, batch, observed


def test_identity_pushforward_is_uniform(identity_setup):
    _, _, kde, _, _ = identity_setup
    assert kde.pdf(0.0) == pytest.approx(0.5, abs=0.02)


def test_chi2_pushforward_value():
    model, _ = quadratic_chi2(QuadraticFormSpec.identity(2))
    kde, batch = build_pushforward(model, MultivariateStandardNormal(2), 100_000, RngStream(22))
    assert kde.pdf(1.0) == pytest.approx(math.exp(-0.5) / 2, abs=0.02)
    assert batch.count == 100_000 and batch.model_name == model.name


def test_constant_map_is_degenerate():
    model = ForwardModel("constant", 1, 1, lambda x: np.array([3.0]), lambda x: np.full((x.shape[0], 1), 3.0))
    with pytest.raises(DegenerateDataError):
        build_pushforward(model, Uniform([0], [1]), 100, RngStream(0))


def test_handle_dimension_checks():
    model, _ = quadratic_chi2(QuadraticFormSpec.identity(2))
    with pytest.raises(InputError):
        PosteriorHandle(Uniform([0], [1]), ChiSquared(2), ChiSquared(2), model)
    with pytest.raises(InputError):
        PosteriorHandle(MultivariateStandardNormal(2), Uniform([0, 0], [1, 1]), ChiSquared(2), model)


def test_ratio_identical_and_zero_numerator():
    model = monomial(1)
    pf = Normal(0, 1)
    h = PosteriorHandle(Uniform([-1], [1]), pf, pf, model)
    assert np.all(h.ratio(np.linspace(-3, 3, 11)) == 1.0)
    h = PosteriorHandle(Uniform([-1], [1]), UniformInterval(5, 6), pf, model)
    assert h.ratio(0.0) == 0.0


def test_ratio_closed_form_chi2():
    model, exact = quadratic_chi2(QuadraticFormSpec.identity(2))
    obs = quantile_matched_uniform_observed(2, 1)
    h = PosteriorHandle(MultivariateStandardNormal(2), obs, exact, model)
    q = np.linspace(obs.a, obs.b, 17)[1:-1]
    assert np.allclose(h.ratio(q), 2 * np.exp(q / 2) / (obs.b - obs.a), rtol=1e-13)
    assert h.ratio(obs.b + 0.1) == 0.0


def test_posterior_pdf_outside_prior_support():
    model = monomial(1)
    h = PosteriorHandle(Uniform([-1], [1]), Normal(0, 1), Normal(0, 1), model)
    assert h.posterior_pdf(1.5) == 0.0


def test_prior_recovery_exact():
    model, _ = quadratic_chi2(QuadraticFormSpec.identity(3))
    kde, batch = build_pushforward(model, MultivariateStandardNormal(3), 2000, RngStream(1))
    prior = MultivariateStandardNormal(3)
    h = PosteriorHandle(prior, kde, kde, model)
    lam = RngStream(2).normal(size=(300, 3)) * 2
    assert np.array_equal(h.posterior_pdf(lam), prior.pdf(lam))
    d = diagnostics(h, batch)
    assert d.integral_estimate == 1.0 and d.kl_divergence == 0.0 and d.dominance_violations == 0


def test_posterior_pdf_cached_qois_match():
    model, exact = quadratic_chi2(QuadraticFormSpec.identity(2))
    h = PosteriorHandle(MultivariateStandardNormal(2), quantile_matched_uniform_observed(2, 1), exact, model)
    lam = RngStream(3).normal(size=(100, 2))
    assert np.array_equal(h.posterior_pdf(lam), h.posterior_pdf(lam, q=model.batch_fn(lam)))


def test_mass_one_analytic():
    from consistent_bayes.experiments import run_mass_oracle

    assert run_mass_oracle() == pytest.approx(1.0, abs=1e-3)


def test_kde_integral_estimate_within_three_over_root_m():
    model, _ = quadratic_chi2(QuadraticFormSpec.identity(2))
    M = 10_000
    kde, batch = build_pushforward(model, MultivariateStandardNormal(2), M, RngStream(4))
    h = PosteriorHandle(MultivariateStandardNormal(2), quantile_matched_uniform_observed(2, 1), kde, model)
    d = diagnostics(h, batch)
    assert abs(d.integral_estimate - 1.0) < 3 / math.sqrt(M)
    assert d.kl_divergence >= -0.01


def test_diagnostics_empty_batch():
    h = PosteriorHandle(Uniform([-1], [1]), Normal(0, 1), Normal(0, 1), monomial(1))
    empty = SampleBatch(np.empty((0, 1)), np.empty((0, 1)), seed=0, model_name="monomial-p1")
    with pytest.raises(InputError):
        diagnostics(h, empty)


def test_constant_ratio_accepts_everything(identity_setup):
    model, prior, kde, batch, _ = identity_setup
    h = PosteriorHandle(prior, kde, kde, model)
    accepted, d = rejection_sample(h, batch, RngStream(5))
    assert accepted.count == batch.count and d.acceptance_rate == 1.0


def test_rejection_matches_exact_posterior(identity_setup):
    model, prior, kde, batch, observed = identity_setup
    h = PosteriorHandle(prior, observed, kde, model)
    accepted, _ = rejection_sample(h, batch, RngStream(6))
    # exact posterior: prior * obs / pf with pf = 1/2 on [-1, 1]
    grid = np.linspace(-1, 1, 200_001)
    dens = 0.5 * observed.pdf(grid) / 0.5
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    assert ks_statistic(accepted.params[:, 0], lambda x: np.interp(x, grid, cdf)) < 0.02


def test_rejection_keeps_row_order(identity_setup):
    model, prior, kde, batch, observed = identity_setup
    accepted, _ = rejection_sample(PosteriorHandle(prior, observed, kde, model), batch, RngStream(7))
    idx = np.searchsorted(batch.params[:, 0], accepted.params[:, 0], sorter=np.argsort(batch.params[:, 0]))
    order = np.argsort(batch.params[:, 0])[idx]
    assert np.all(np.diff(order) > 0)


def test_acceptance_rate_matches_integral_over_max(identity_setup):
    model, prior, kde, batch, observed = identity_setup
    _, d = rejection_sample(PosteriorHandle(prior, observed, kde, model), batch, RngStream(8))
    p = d.integral_estimate / d.max_ratio
    se = math.sqrt(p * (1 - p) / batch.count)
    assert abs(d.acceptance_rate - p) < 3 * se


def test_rejection_empty_posterior():
    model = monomial(1)
    prior = Uniform([-1], [1])
    kde, batch = build_pushforward(model, prior, 1000, RngStream(9))
    h = PosteriorHandle(prior, UniformInterval(5, 6), kde, model)
    with pytest.raises(EmptyPosteriorError):
        rejection_sample(h, batch, RngStream(10))
    with pytest.raises(InputError):
        rejection_sample(PosteriorHandle(prior, kde, kde, model), batch, RngStream(10), safety_factor=0.5)


def test_safety_factor_lowers_acceptance(identity_setup):
    model, prior, kde, batch, observed = identity_setup
    h = PosteriorHandle(prior, observed, kde, model)
    _, d1 = rejection_sample(h, batch, RngStream(11))
    _, d2 = rejection_sample(h, batch, RngStream(11), safety_factor=2.0)
    assert d2.acceptance_rate == pytest.approx(d1.acceptance_rate / 2, rel=0.05)


def test_dominance_violation_detected():
    model = monomial(1)
    prior = Uniform([-1], [1])
    kde, batch = build_pushforward(model, prior, 5000, RngStream(12))
    observed = Normal(1.5, 0.3)
    h = PosteriorHandle(prior, observed, kde, model)
    probe = observed.sample(1000, RngStream(13))
    d = diagnostics(h, batch, probe=probe)
    assert d.dominance_violations > 0
    assert abs(d.integral_estimate - 1.0) > 0.3


def test_set_probability_full_space(identity_setup):
    model, prior, kde, batch, observed = identity_setup
    h = PosteriorHandle(prior, observed, kde, model)
    assert set_posterior_probability(h, [-1.0], [1.0], batch) == pytest.approx(1.0, abs=0.01)


def test_set_probability_matches_density_for_bijection(identity_setup):
    model, prior, kde, batch, observed = identity_setup
    h = PosteriorHandle(prior, observed, kde, model)
    x = np.linspace(0.0, 0.5, 4001)
    expected = trapezoid(h.posterior_pdf(x), x)
    assert set_posterior_probability(h, [0.0], [0.5], batch) == pytest.approx(expected, abs=0.02)


def test_set_probability_edge_cases(identity_setup):
    model, prior, kde, batch, observed = identity_setup
    h = PosteriorHandle(prior, observed, kde, model)
    assert set_posterior_probability(h, [0.3], [0.3], batch) == 0.0
    assert set_posterior_probability(h, [2.0], [3.0], batch) == 0.0
    with pytest.raises(InsufficientCoverageError):
        set_posterior_probability(h, [0.0], [0.0005], batch)
    block, _, spec = get_model("chi2-block", dim=4, qoi_count=2)
    kde2, batch2 = build_pushforward(block, spec.prior(), 200, RngStream(14))
    h2 = PosteriorHandle(spec.prior(), quantile_matched_uniform_observed(4, 2), kde2, block)
    with pytest.raises(UnsupportedError):
        set_posterior_probability(h2, [-1] * 4, [1] * 4, batch2)
