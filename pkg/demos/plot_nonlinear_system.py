"""
Inverting a nonlinear system
============================

Two uncertain coefficients enter a small nonlinear system, and we only
observe the second unknown. The consistent posterior reweights the prior
so that pushing it through the model reproduces the observed density.
"""

import numpy as np

from consistent_bayes import (
    Normal,
    PosteriorHandle,
    RngStream,
    Uniform,
    build_pushforward,
    fit_gkde,
    rejection_sample,
    tv_distance_quadrature,
)
from consistent_bayes.models import NONLINEAR_DOMAIN, nonlinear_system

###############################################################################
# Forward propagation: sample the prior, run the model, estimate the
# density of the outputs with a Gaussian KDE.

model = nonlinear_system()
prior = Uniform(NONLINEAR_DOMAIN.lower, NONLINEAR_DOMAIN.upper)
observed = Normal(0.3, 0.025)

sample_rng, accept_rng = RngStream(2024).spawn(2)
pushforward, batch = build_pushforward(model, prior, 10_000, sample_rng)
print("push-forward bandwidth:", pushforward.bandwidth)

###############################################################################
# Update and sample. The mean ratio estimates the posterior mass; values
# near one say the observed density is covered by the push-forward.

handle = PosteriorHandle(prior, observed, pushforward, model)
accepted, diag = rejection_sample(handle, batch, accept_rng)
print(f"I = {diag.integral_estimate:.4f}, KL = {diag.kl_divergence:.4f}")
print(f"accepted {accepted.count} of {batch.count} samples")

###############################################################################
# Check consistency: the push-forward of the posterior should look like the
# observed density, while the push-forward of the prior does not.

post_pf = fit_gkde(accepted.qois)
support = (0.0, 0.8)
print("TV(prior push-forward, observed):", round(tv_distance_quadrature(pushforward, observed, support), 3))
print("TV(posterior push-forward, observed):", round(tv_distance_quadrature(post_pf, observed, support), 3))

q = np.linspace(0.15, 0.45, 7)
print(np.column_stack([q, observed.pdf(q), post_pf.pdf(q)]).round(3))
