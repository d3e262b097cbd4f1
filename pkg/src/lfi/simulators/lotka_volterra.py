"""Stochastic Lotka-Volterra predator-prey model with nine summary statistics.

Inference works on log rates: the simulator takes ``log theta`` and the prior
is a box on ``log theta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import PilotDegenerate, SimulationExploded
from ..gmath import UniformBoxPrior
from .artifacts import load_artifact, save_artifact
from .gillespie import LV_CHANGES, LV_ORDERS, gillespie

INITIAL_STATE = (50, 100)
DURATION = 30.0
DT = 0.2
THETA_TRUE = np.array([0.01, 0.5, 1.0, 0.01])
LOG_PRIOR_BOX = (-5.0, 2.0)
MAX_EVENTS = 100_000
STAT_NAMES = ("mean_X", "mean_Y", "logvar_X", "logvar_Y", "acf1_X", "acf2_X", "acf1_Y", "acf2_Y", "ccf_XY")
VAR_FLOOR = 1e-12


def time_grid(duration=DURATION, dt=DT):
    n = int(round(duration / dt)) + 1
    return np.arange(n) * dt


def gillespie_lv(theta, rng: np.random.Generator, initial=INITIAL_STATE, duration=DURATION, dt=DT, max_events=MAX_EVENTS):
    """Simulate the four-reaction model; returns the X and Y series on the 0.2 grid."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (4,) or np.any(theta < 0):
        raise ValueError("theta must hold four non-negative rates")
    records, _ = gillespie(initial, theta, LV_ORDERS, LV_CHANGES, time_grid(duration, dt), rng, max_events)
    return records[:, 0], records[:, 1]


def _autocorr(d, var, lag):
    n = d.size
    return float(np.dot(d[:-lag], d[lag:]) / n / var)


def lv_summary(series_x, series_y) -> np.ndarray:
    """Means, log variances, lag-1/2 autocorrelations and lag-0 cross-correlation.

    Autocovariances use the biased (divide by N) estimator normalized by the
    lag-0 value. Zero-variance series get a floored log variance and
    correlation statistics of 0.
    """
    x = np.asarray(series_x, dtype=np.float64)
    y = np.asarray(series_y, dtype=np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    vx = float(np.mean(dx * dx))
    vy = float(np.mean(dy * dy))
    okx, oky = vx > 0, vy > 0
    stats = [
        x.mean(),
        y.mean(),
        np.log(max(vx, VAR_FLOOR)),
        np.log(max(vy, VAR_FLOOR)),
        _autocorr(dx, vx, 1) if okx else 0.0,
        _autocorr(dx, vx, 2) if okx else 0.0,
        _autocorr(dy, vy, 1) if oky else 0.0,
        _autocorr(dy, vy, 2) if oky else 0.0,
        float(np.mean(dx * dy) / np.sqrt(vx * vy)) if okx and oky else 0.0,
    ]
    return np.array(stats)


@dataclass(frozen=True, eq=False)
class PilotStats:
    """Per-statistic centre and scale."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def from_samples(cls, stats) -> "PilotStats":
        stats = np.asarray(stats, dtype=np.float64)
        return cls(stats.mean(axis=0), stats.std(axis=0))


def pilot_normalize(stats, pilot: PilotStats) -> np.ndarray:
    std = np.asarray(pilot.std)
    if np.any(~(std > 0)):
        raise PilotDegenerate(f"pilot standard deviations must be positive, got {std}")
    return (np.asarray(stats, dtype=np.float64) - pilot.mean) / std


def run_pilot(n, rng, prior: UniformBoxPrior, max_events=MAX_EVENTS):
    """Raw summaries of ``n`` non-exploding simulations at log-parameters drawn from the prior."""
    out = []
    calls = 0
    while len(out) < n:
        log_theta = prior.sample(rng, 1)[0]
        calls += 1
        try:
            xs, ys = gillespie_lv(np.exp(log_theta), rng, max_events=max_events)
        except SimulationExploded:
            continue
        out.append(lv_summary(xs, ys))
    return np.array(out), calls


@dataclass(frozen=True, eq=False)
class LvProblem:
    pilot: PilotStats
    x_o: np.ndarray
    theta_true: np.ndarray
    seed: int = 0
    max_events: int = MAX_EVENTS

    name = "lv"
    theta_dim = 4
    x_dim = 9

    @property
    def prior(self) -> UniformBoxPrior:
        lo, hi = LOG_PRIOR_BOX
        return UniformBoxPrior(np.full(4, lo), np.full(4, hi))

    def simulate(self, log_theta, rng):
        """Normalized summaries at ``exp(log_theta)``; may raise SimulationExploded."""
        xs, ys = gillespie_lv(np.exp(np.asarray(log_theta, dtype=np.float64)), rng, max_events=self.max_events)
        return pilot_normalize(lv_summary(xs, ys), self.pilot)

    @classmethod
    def generate(cls, seed=0, n_pilot=1000, max_events=MAX_EVENTS, **_):
        rng = np.random.default_rng([seed, 3])
        lo, hi = LOG_PRIOR_BOX
        prior = UniformBoxPrior(np.full(4, lo), np.full(4, hi))
        raw, _ = run_pilot(n_pilot, rng, prior, max_events)
        pilot = PilotStats.from_samples(raw)
        theta_true = np.log(THETA_TRUE)
        while True:
            try:
                xs, ys = gillespie_lv(THETA_TRUE, rng, max_events=max_events)
                break
            except SimulationExploded:
                continue
        x_o = pilot_normalize(lv_summary(xs, ys), pilot)
        return cls(pilot, x_o, theta_true, seed, max_events)

    def save(self, directory, seed=None):
        d = Path(directory)
        seed = self.seed if seed is None else seed
        cols = ",".join(STAT_NAMES)
        save_artifact(d / "lv_pilot.txt", np.vstack([self.pilot.mean, self.pilot.std]), "lv", seed,
                      rows="mean,std", columns=cols, max_events=self.max_events)
        save_artifact(d / "lv_x_o.txt", self.x_o, "lv", seed, columns=cols, normalized=True)
        save_artifact(d / "lv_theta_true.txt", self.theta_true, "lv", seed, columns="log_theta1..4")

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        pilot, meta = load_artifact(d / "lv_pilot.txt")
        x_o, _ = load_artifact(d / "lv_x_o.txt")
        theta, _ = load_artifact(d / "lv_theta_true.txt")
        return cls(PilotStats(pilot[0], pilot[1]), x_o[0], theta[0], int(meta["seed"]), int(meta["max_events"]))
