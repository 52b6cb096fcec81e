"""
Gaussian noise in a tangent space
=================================

Noise with density proportional to ``exp(-|xi|_w^2 / (2 sigma^2))`` has
covariance ``sigma^2 G_w^{-1}`` in coordinates, where ``G_w`` is the metric
tensor. The exact sampler draws it directly; the random-walk
Metropolis-Hastings chain only uses the unnormalised density.
"""

import numpy as np

from dp_riemopt import SPD, MhParams, RngStream, tangent_gaussian_coords, tangent_gaussian_mh_chain

P = SPD(2)
W = np.array([[2.0, 0.5], [0.5, 1.0]])
sigma = 0.8

exact = tangent_gaussian_coords(P, W, sigma, RngStream(0, "noise"), 100_000)
target = sigma**2 * np.linalg.inv(P.metric_tensor(W))
print("target covariance\n", target)
print("exact sampler\n", np.cov(exact.T))

draws, rate = tangent_gaussian_mh_chain(P, W, sigma, np.random.default_rng(1), MhParams(), n_samples=20_000)
print("MH covariance\n", np.cov(draws.T))
print("MH acceptance rate", round(rate, 3))

# the squared metric norm averages d sigma^2 whatever the base point
sq = [P.norm(W, P.unvec(W, c)) ** 2 for c in exact[:5000]]
print("E|xi|^2 =", np.mean(sq), " d sigma^2 =", P.dim * sigma**2)
