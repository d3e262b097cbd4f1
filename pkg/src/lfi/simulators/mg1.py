"""M/G/1 queue observed through percentiles of inter-departure times.

The prior is uniform on ``(theta1, theta2 - theta1, theta3)``, so inference
runs in that coordinate system, where the prior is an axis-aligned box. The
map to ``(theta1, theta2, theta3)`` has unit Jacobian, so densities agree in
both systems.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from ..errors import PilotDegenerate
from ..gmath import UniformBoxPrior
from .artifacts import load_artifact, save_artifact

N_JOBS = 50
PERCENTILES = (0, 25, 50, 75, 100)
THETA_TRUE = np.array([1.0, 5.0, 0.2])


def to_queue_params(phi):
    """(theta1, theta2 - theta1, theta3) -> (theta1, theta2, theta3)."""
    phi = np.asarray(phi, dtype=np.float64)
    out = phi.copy()
    out[..., 1] = phi[..., 0] + phi[..., 1]
    return out


def from_queue_params(theta):
    theta = np.asarray(theta, dtype=np.float64)
    out = theta.copy()
    out[..., 1] = theta[..., 1] - theta[..., 0]
    return out


def mg1_departures(theta, rng: np.random.Generator, n_jobs=N_JOBS):
    """Departure times of ``n_jobs`` jobs for each row of ``theta`` (shape (n, 3))."""
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    t1, t2, t3 = theta[:, :1], theta[:, 1:2], theta[:, 2:3]
    if np.any(t1 < 0) or np.any(t2 < t1) or np.any(t3 <= 0):
        raise ValueError("need 0 <= theta1 <= theta2 and theta3 > 0")
    n = theta.shape[0]
    service = t1 + (t2 - t1) * rng.random((n, n_jobs))
    arrivals = np.cumsum(rng.exponential(1.0, (n, n_jobs)) / t3, axis=1)
    dep = np.empty((n, n_jobs))
    prev = np.zeros(n)
    for i in range(n_jobs):
        prev = prev + service[:, i] + np.maximum(0.0, arrivals[:, i] - prev)
        dep[:, i] = prev
    return dep


def sim_mg1_batch(theta, rng, n_jobs=N_JOBS) -> np.ndarray:
    dep = mg1_departures(theta, rng, n_jobs)
    inter = np.diff(dep, axis=1, prepend=0.0)
    return np.percentile(inter, PERCENTILES, axis=1).T


def sim_mg1(theta, rng: np.random.Generator, n_jobs=N_JOBS) -> np.ndarray:
    """Min, quartiles and max (linear interpolation) of the inter-departure times."""
    return sim_mg1_batch(np.asarray(theta)[None, :], rng, n_jobs)[0]


@dataclass(frozen=True, eq=False)
class PilotMoments:
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def from_samples(cls, samples) -> "PilotMoments":
        samples = np.asarray(samples, dtype=np.float64)
        return cls(samples.mean(axis=0), np.cov(samples.T, bias=True))


def pilot_whiten(percentiles, pilot: PilotMoments) -> np.ndarray:
    """``inv(L) (p - mean)`` with ``L`` the lower Cholesky factor of the pilot covariance."""
    try:
        low = np.linalg.cholesky(pilot.cov)
    except np.linalg.LinAlgError:
        raise PilotDegenerate("pilot covariance is not positive definite") from None
    d = np.asarray(percentiles, dtype=np.float64) - pilot.mean
    return solve_triangular(low, d.T, lower=True).T


def mg1_prior() -> UniformBoxPrior:
    return UniformBoxPrior([0.0, 0.0, 0.0], [10.0, 10.0, 1.0 / 3.0])


@dataclass(frozen=True, eq=False)
class Mg1Problem:
    pilot: PilotMoments
    x_o: np.ndarray
    theta_true: np.ndarray
    seed: int = 0

    name = "mg1"
    theta_dim = 3
    x_dim = 5

    @property
    def prior(self) -> UniformBoxPrior:
        return mg1_prior()

    def simulate(self, phi, rng):
        """Whitened percentiles at reparameterized ``phi = (theta1, theta2 - theta1, theta3)``."""
        return pilot_whiten(sim_mg1(to_queue_params(phi), rng), self.pilot)

    def simulate_batch(self, phi, rng):
        return pilot_whiten(sim_mg1_batch(to_queue_params(phi), rng), self.pilot)

    @classmethod
    def generate(cls, seed=0, n_pilot=100_000, **_):
        rng = np.random.default_rng([seed, 4])
        prior = mg1_prior()
        pilot = PilotMoments.from_samples(sim_mg1_batch(to_queue_params(prior.sample(rng, n_pilot)), rng))
        x_o = pilot_whiten(sim_mg1(THETA_TRUE, rng), pilot)
        return cls(pilot, x_o, from_queue_params(THETA_TRUE), seed)

    def save(self, directory, seed=None):
        d = Path(directory)
        seed = self.seed if seed is None else seed
        cols = "p0,p25,p50,p75,p100"
        save_artifact(d / "mg1_pilot_mean.txt", self.pilot.mean, "mg1", seed, columns=cols)
        save_artifact(d / "mg1_pilot_cov.txt", self.pilot.cov, "mg1", seed, columns=cols)
        save_artifact(d / "mg1_x_o.txt", self.x_o, "mg1", seed, columns=cols, whitened=True)
        save_artifact(d / "mg1_theta_true.txt", self.theta_true, "mg1", seed,
                      columns="theta1,theta2-theta1,theta3")

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        mean, meta = load_artifact(d / "mg1_pilot_mean.txt")
        cov, _ = load_artifact(d / "mg1_pilot_cov.txt")
        x_o, _ = load_artifact(d / "mg1_x_o.txt")
        theta, _ = load_artifact(d / "mg1_theta_true.txt")
        return cls(PilotMoments(mean[0], cov), x_o[0], theta[0], int(meta["seed"]))
