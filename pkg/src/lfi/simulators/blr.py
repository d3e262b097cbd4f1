"""Bayesian linear regression with a Gaussian prior and known noise."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..gmath import Gaussian
from .artifacts import load_artifact, save_artifact


def sim_blr(theta, inputs, sigma, rng: np.random.Generator) -> np.ndarray:
    """x_i = theta . u_i + sigma z_i for each row u_i of ``inputs``."""
    theta = np.asarray(theta, dtype=np.float64)
    return inputs @ theta + sigma * rng.standard_normal(inputs.shape[0])


def blr_true_posterior(x_o, inputs, sigma, prior: Gaussian) -> Gaussian:
    """Conjugate posterior: precision inv(S) + U'U / sigma^2."""
    x_o = np.asarray(x_o, dtype=np.float64)
    p0 = prior.precision
    precision = p0 + inputs.T @ inputs / sigma**2
    mean = np.linalg.solve(precision, p0 @ prior.mean + inputs.T @ x_o / sigma**2)
    return Gaussian.from_precision(mean, precision)


@dataclass(frozen=True, eq=False)
class BlrProblem:
    inputs: np.ndarray
    x_o: np.ndarray
    theta_true: np.ndarray
    sigma: float = 0.1
    seed: int = 0

    name = "blr"

    @property
    def theta_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def x_dim(self) -> int:
        return self.inputs.shape[0]

    @property
    def prior(self) -> Gaussian:
        return Gaussian.standard(self.theta_dim)

    def simulate(self, theta, rng):
        return sim_blr(theta, self.inputs, self.sigma, rng)

    def true_posterior(self) -> Gaussian:
        return blr_true_posterior(self.x_o, self.inputs, self.sigma, self.prior)

    @classmethod
    def generate(cls, seed=0, theta_dim=6, x_dim=10, sigma=0.1, **_):
        rng = np.random.default_rng([seed, 2])
        inputs = rng.standard_normal((x_dim, theta_dim))
        theta_true = rng.standard_normal(theta_dim)
        x_o = sim_blr(theta_true, inputs, sigma, rng)
        return cls(inputs, x_o, theta_true, sigma, seed)

    def save(self, directory, seed=None):
        d = Path(directory)
        seed = self.seed if seed is None else seed
        meta = dict(sigma=self.sigma)
        save_artifact(d / "blr_inputs.txt", self.inputs, "blr", seed, rows="u_i", **meta)
        save_artifact(d / "blr_x_o.txt", self.x_o, "blr", seed, **meta)
        save_artifact(d / "blr_theta_true.txt", self.theta_true, "blr", seed, **meta)

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        inputs, meta = load_artifact(d / "blr_inputs.txt")
        x_o, _ = load_artifact(d / "blr_x_o.txt")
        theta, _ = load_artifact(d / "blr_theta_true.txt")
        return cls(inputs, x_o[0], theta[0], float(meta["sigma"]), int(meta["seed"]))
