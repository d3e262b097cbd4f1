"""Common mean of a two-component 1-d Gaussian mixture."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from ..gmath import UniformBoxPrior


def sim_mog(theta, rng: np.random.Generator, alpha=0.5, sigma1=1.0, sigma2=0.1) -> np.ndarray:
    """Draw x ~ alpha N(theta, sigma1^2) + (1 - alpha) N(theta, sigma2^2)."""
    theta = float(np.ravel(theta)[0])
    sd = sigma1 if rng.random() < alpha else sigma2
    return np.array([theta + sd * rng.standard_normal()])


def mog_true_posterior(x_o, lower=-10.0, upper=10.0, alpha=0.5, sigma1=1.0, sigma2=0.1):
    """Exact posterior density under a uniform prior on ``[lower, upper]``."""
    x_o = float(np.ravel(x_o)[0])

    def mass(sd):
        return norm.cdf((upper - x_o) / sd) - norm.cdf((lower - x_o) / sd)

    z = alpha * mass(sigma1) + (1 - alpha) * mass(sigma2)

    def density(theta):
        theta = np.asarray(theta, dtype=np.float64)
        val = alpha * norm.pdf(theta, x_o, sigma1) + (1 - alpha) * norm.pdf(theta, x_o, sigma2)
        inside = (theta >= lower) & (theta <= upper)
        return np.where(inside, val / z, 0.0)

    return density


@dataclass(frozen=True)
class MogProblem:
    theta_lower: float = -10.0
    theta_upper: float = 10.0
    alpha: float = 0.5
    sigma1: float = 1.0
    sigma2: float = 0.1
    x_o_value: float = 0.0

    name = "mog"
    theta_dim = 1
    x_dim = 1

    def __post_init__(self):
        if not self.sigma2 < self.sigma1:
            raise ValueError("need sigma2 < sigma1")

    @property
    def prior(self) -> UniformBoxPrior:
        return UniformBoxPrior([self.theta_lower], [self.theta_upper])

    @property
    def x_o(self) -> np.ndarray:
        return np.array([self.x_o_value])

    @property
    def theta_true(self):
        return None

    def simulate(self, theta, rng):
        return sim_mog(theta, rng, self.alpha, self.sigma1, self.sigma2)

    def true_posterior(self):
        return mog_true_posterior(
            self.x_o_value, self.theta_lower, self.theta_upper, self.alpha, self.sigma1, self.sigma2
        )

    def save(self, directory, seed=0):
        pass

    @classmethod
    def generate(cls, seed=0, **_):
        return cls()

    @classmethod
    def load(cls, directory):
        return cls()
