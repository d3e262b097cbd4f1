"""Accuracy metrics for learned posteriors."""

from __future__ import annotations

import numpy as np

from ..gmath import Gaussian, GaussianMixture, kl_gaussian, mixture_logpdf


def _single(g) -> Gaussian:
    if isinstance(g, GaussianMixture):
        if g.n_components != 1:
            raise ValueError("KL metric needs a single Gaussian")
        return g.components[0]
    return g


def metric_kl_to_true(true_post, learned) -> float:
    """KL(true || learned) between Gaussians (one-component mixtures accepted)."""
    return kl_gaussian(_single(true_post), _single(learned))


def metric_neg_logprob_true(posterior: GaussianMixture, theta_true) -> float:
    """Negative log density of the true parameters under the posterior."""
    if isinstance(posterior, Gaussian):
        posterior = GaussianMixture.single(posterior)
    return -float(mixture_logpdf(posterior, np.asarray(theta_true, dtype=np.float64)))


def metric_tv_on_grid(posterior: GaussianMixture, density, grid) -> float:
    """Total variation distance to a 1-d reference density by the rectangle rule.

    ``grid`` must be equally spaced; the posterior is evaluated untruncated.
    """
    grid = np.asarray(grid, dtype=np.float64)
    dx = grid[1] - grid[0]
    p = posterior.pdf(grid[:, None])
    return 0.5 * float(np.sum(np.abs(p - density(grid))) * dx)
