import math

import numpy as np
import pytest

from consistent_bayes import FactorizationError, InputError, RngStream, evaluate_batch, sample_uniform
from consistent_bayes.models import (
    NONLINEAR_DOMAIN,
    QuadraticFormSpec,
    block_quantile_levels,
    get_model,
    monomial,
    nonlinear_system,
    piecewise_branch,
    piecewise_smooth,
    quadratic_chi2,
    quantile_matched_uniform_observed,
)
from consistent_bayes.special import chi2_cdf


@pytest.mark.parametrize("lam, expected", [((0.99, 1.0), math.sqrt(0.01 / 1.99)), ((0.79, 1.0), math.sqrt(0.21 / 1.79))])
def test_nonlinear_closed_form(lam, expected):
    assert nonlinear_system()(lam)[0] == pytest.approx(expected, rel=1e-14)


def test_nonlinear_values_quoted():
    assert nonlinear_system()((0.99, 1.0))[0] == pytest.approx(0.070888, abs=1e-6)


def test_nonlinear_residual():
    lam = sample_uniform(NONLINEAR_DOMAIN, 200, RngStream(0))
    x2 = evaluate_batch(nonlinear_system(), lam)[:, 0]
    x2sq = x2**2
    # both equations: lam1*x1^2 + x2^2 = 1 and x1^2 - lam2*x2^2 = 1
    x1sq = 1.0 + lam[:, 1] * x2sq
    assert np.max(np.abs(lam[:, 0] * x1sq + x2sq - 1.0)) < 1e-12


def test_nonlinear_image_stable_across_seeds():
    ranges = []
    for seed in (1, 2, 3):
        q = evaluate_batch(nonlinear_system(), sample_uniform(NONLINEAR_DOMAIN, 100_000, RngStream(seed)))
        ranges.append((q.min(), q.max()))
    ranges = np.array(ranges)
    assert np.ptp(ranges[:, 0]) < 0.01 and np.ptp(ranges[:, 1]) < 0.01


def test_piecewise_branch_values():
    m = piecewise_smooth(2)
    assert m((1.0, 1.0))[0] == pytest.approx(math.exp(-2) - 4, abs=1e-12)
    assert m((1.0, 1.0))[0] == pytest.approx(-3.864665, abs=1e-6)
    assert m((-1.0, 1.0))[0] == pytest.approx(math.exp(-2), abs=1e-12)
    assert m((0.0, 0.0))[0] == pytest.approx(4.0, abs=1e-12)


def test_piecewise_branches_partition():
    x = sample_uniform(piecewise_smooth(2).domain, 50_000, RngStream(1))
    branch = piecewise_branch(x)
    assert set(np.unique(branch)) <= {0, 1, 2, 3}
    assert branch.shape == (50_000,)
    assert len(np.unique(branch)) == 4


def test_piecewise_image_has_gap():
    g = np.linspace(-1, 1, 400)
    gx, gy = np.meshgrid(g, g)
    q = np.sort(evaluate_batch(piecewise_smooth(2), np.column_stack([gx.ravel(), gy.ravel()]))[:, 0])
    assert np.max(np.diff(q)) > 0.3


def test_quadratic_identity_values():
    model, _ = quadratic_chi2(QuadraticFormSpec.identity(2))
    assert model((1.0, 1.0))[0] == pytest.approx(2.0)
    model, _ = quadratic_chi2(QuadraticFormSpec.identity(4, 2))
    assert np.allclose(model((1.0, 2.0, 3.0, 4.0)), [5.0, 25.0])


def test_quadratic_two_linear_algebra_paths_agree():
    spec = QuadraticFormSpec.random(100, 1, seed=11)
    lam = spec.prior().sample(20, RngStream(2))
    a = spec.evaluate(lam)
    b = spec.evaluate_cho_solve(lam)
    cinv = np.linalg.inv(spec.covariance)
    c = np.einsum("ij,jk,ik->i", lam - spec.mean, cinv, lam - spec.mean)[:, None]
    assert np.allclose(a, b, rtol=1e-8, atol=0)
    assert np.allclose(a, c, rtol=1e-8, atol=0)


def test_quadratic_spec_validation():
    with pytest.raises(FactorizationError):
        QuadraticFormSpec([np.array([[1.0, 2.0], [2.0, 1.0]])])
    with pytest.raises(InputError):
        QuadraticFormSpec.random(5, 2)
    spec = QuadraticFormSpec.random(6, 3, seed=1)
    assert spec.dim == 6 and spec.qoi_count == 3 and spec.block_dim == 2
    assert np.allclose(spec.covariance, spec.covariance.T)


def test_monomial():
    assert monomial(1)(0.25)[0] == 0.25
    assert monomial(5)(0.5)[0] == pytest.approx(0.03125)
    assert monomial(3)(-1.0)[0] == -1.0
    for p in (2, 0, -1, 1.5):
        with pytest.raises(InputError):
            monomial(p)


def test_quantile_matched_d2():
    obs = quantile_matched_uniform_observed(2, 1)
    assert obs.a == pytest.approx(2 * math.log(5 / 3), abs=1e-9)
    assert obs.b == pytest.approx(2 * math.log(5 / 2), abs=1e-9)
    assert chi2_cdf(2, obs.b) - chi2_cdf(2, obs.a) == pytest.approx(0.2, abs=1e-9)


@pytest.mark.parametrize("dim, m", [(4, 2), (12, 4), (12, 3)])
def test_block_box_mass_is_one_fifth(dim, m):
    obs = quantile_matched_uniform_observed(dim, m)
    k = dim // m
    mass = 1.0
    for f in obs.factors:
        mass *= chi2_cdf(k, f.b) - chi2_cdf(k, f.a)
    assert mass == pytest.approx(0.2, abs=1e-9)


def test_literal_block_levels():
    lo, hi = block_quantile_levels(2, "paper")
    assert lo == pytest.approx(0.5 - math.sqrt(0.2)) and hi == pytest.approx(0.5 + math.sqrt(0.2))
    with pytest.raises(InputError):
        block_quantile_levels(3, "paper")
    assert block_quantile_levels(1, "paper") == (0.4, 0.6)


def test_registry():
    model, exact, spec = get_model("chi2-block", dim=4, qoi_count=2)
    assert model.out_dim == 2 and spec.qoi_count == 2 and exact.dim == 2
    assert get_model("monomial-p5")[0](0.5)[0] == pytest.approx(0.03125)
    with pytest.raises(InputError):
        get_model("darcy")
