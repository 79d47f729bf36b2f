import math

import numpy as np
import pytest

from consistent_bayes import (
    EmptyPosteriorError,
    InputError,
    RngStream,
    SampleBatch,
    TruncatedNormal,
    Uniform,
    fit_gkde,
    tv_distance_quadrature,
)
from consistent_bayes.baselines import (
    LikelihoodSpec,
    likelihood,
    pushforward_compare,
    statistical_posterior_pdf,
    statistical_posterior_rejection,
)
from consistent_bayes.experiments import run_comparison
from consistent_bayes.inference import PosteriorHandle, build_pushforward, rejection_sample
from consistent_bayes.models import monomial, nonlinear_system


def test_likelihood_peak_and_one_sigma():
    spec = LikelihoodSpec.gaussian(0.25, 0.1)
    model = monomial(1)
    peak = 1 / (0.1 * math.sqrt(2 * math.pi))
    assert likelihood(spec, model, 0.25) == pytest.approx(peak, rel=1e-14)
    assert likelihood(spec, model, 0.25) == pytest.approx(3.98942, abs=1e-5)
    assert likelihood(spec, model, 0.35) == pytest.approx(peak * math.exp(-0.5), rel=1e-12)


def test_likelihood_multivariate_peak():
    spec = LikelihoodSpec([1.0, 2.0], [0.5, 2.0])
    assert spec.density_of_residuals(np.array([[1.0, 2.0]]))[0] == pytest.approx(
        1 / math.sqrt(2 * math.pi * 0.5) / math.sqrt(2 * math.pi * 2.0))


def test_likelihood_validation():
    with pytest.raises(InputError):
        LikelihoodSpec.gaussian(0.0, 0.0)
    with pytest.raises(InputError):
        likelihood(LikelihoodSpec([0.0, 0.0], [1.0, 1.0]), monomial(1), 0.5)


def test_constant_likelihood_accepts_all():
    params = np.linspace(-1, 1, 50)[:, None]
    batch = SampleBatch(params, np.full((50, 1), 0.3), seed=0, model_name="monomial-p1")
    acc = statistical_posterior_rejection(LikelihoodSpec.gaussian(0.3, 0.1), monomial(1), batch, RngStream(0))
    assert acc.count == 50


def test_vanishing_likelihood_is_empty_posterior():
    params = np.linspace(-1, 1, 50)[:, None]
    batch = SampleBatch(params, params.copy(), seed=0, model_name="monomial-p1")
    with pytest.raises(EmptyPosteriorError):
        statistical_posterior_rejection(LikelihoodSpec.gaussian(1e6, 0.01), monomial(1), batch, RngStream(0))


def test_statistical_posterior_proportional_to_prior_times_likelihood():
    model = nonlinear_system()
    prior = Uniform(model.domain.lower, model.domain.upper)
    _, batch = build_pushforward(model, prior, 2000, RngStream(1))
    spec = LikelihoodSpec.gaussian(0.3, 0.025).with_normalization(batch.qois)
    lam = prior.sample(100, RngStream(2))
    ratio = statistical_posterior_pdf(spec, prior, model, lam) / (prior.pdf(lam) * likelihood(spec, model, lam))
    assert np.max(np.abs(ratio / ratio[0] - 1)) < 1e-12
    assert ratio[0] == pytest.approx(1 / spec.normalization, rel=1e-14)


@pytest.fixture(scope="module")
def comparisons():
    return {p: run_comparison(p, 100_000, seed=0) for p in (1, 5)}


def test_identity_case_posteriors_agree(comparisons):
    assert comparisons[1].extra["tv_posteriors"] < 0.05


def test_identity_case_pushforwards(comparisons):
    x = comparisons[1].extra
    assert x["tv_consistent"] < 0.1 and x["tv_statistical"] < 0.1


def test_nonlinear_case(comparisons):
    x = comparisons[5].extra
    assert x["tv_consistent"] < x["tv_statistical"]
    assert x["tv_consistent"] < 0.1 < x["tv_statistical"]


def test_nonlinear_case_pushforwards_differ():
    model = monomial(5)
    prior = Uniform([-1.0], [1.0])
    observed = TruncatedNormal(0.25, 0.1, -1, 1)
    kde, batch = build_pushforward(model, prior, 100_000, RngStream(3))
    acc_c, _ = rejection_sample(PosteriorHandle(prior, observed, kde, model), batch, RngStream(4))
    acc_s = statistical_posterior_rejection(LikelihoodSpec.gaussian(0.25, 0.1), model, batch, RngStream(5))
    kc, ks = fit_gkde(acc_c.qois), fit_gkde(acc_s.qois)
    assert tv_distance_quadrature(kc, ks, (-1.2, 1.2), 8193) > 0.2


def test_pushforward_compare_self_test():
    model = monomial(1)
    prior = Uniform([-1.0], [1.0])
    _, batch = build_pushforward(model, prior, 5000, RngStream(6))
    sub = batch.subset(np.abs(batch.params[:, 0]) < 0.5)
    tv_c, tv_s = pushforward_compare(model, sub, batch, fit_gkde(sub.qois))
    assert tv_c == pytest.approx(0.0, abs=1e-9)
    assert tv_s > 0.3
