"""Conjugate linear-Gaussian toy model, x = theta + noise, used as an exact oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..gmath import Gaussian


@dataclass(frozen=True, eq=False)
class LinearGaussianProblem:
    prior_mean: float = 0.0
    prior_std: float = 1.0
    noise_std: float = 0.1
    x_o_value: float = 0.5

    name = "linear_gaussian"
    theta_dim = 1
    x_dim = 1

    @property
    def prior(self) -> Gaussian:
        return Gaussian([self.prior_mean], [[1.0 / self.prior_std]])

    @property
    def x_o(self):
        return np.array([self.x_o_value])

    @property
    def theta_true(self):
        return None

    def simulate(self, theta, rng):
        return np.asarray(theta, dtype=np.float64).reshape(1) + self.noise_std * rng.standard_normal(1)

    def posterior_under(self, prior: Gaussian, x=None) -> Gaussian:
        """Exact posterior at ``x`` (default x_o) for an arbitrary Gaussian prior."""
        x = self.x_o_value if x is None else float(np.ravel(x)[0])
        p0 = prior.precision[0, 0]
        prec = p0 + 1.0 / self.noise_std**2
        mean = (p0 * prior.mean[0] + x / self.noise_std**2) / prec
        return Gaussian.from_precision([mean], [[prec]])

    def true_posterior(self) -> Gaussian:
        return self.posterior_under(self.prior)
