"""Approximate Bayesian computation baselines and effective sample sizes.

All samplers accept a simulated data vector when its Euclidean distance to
the observation is below ``epsilon``. Statistics are expected to be
normalized already. Every simulator call counts towards ``n_simulations``,
including calls whose output is rejected or whose simulation exploded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .data import simulator_fns
from .errors import BudgetExhausted, DegenerateChain, SimulationExploded

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 10_000_000


@dataclass
class AbcResult:
    """Samples from an ABC run.

    ``flags`` collects non-fatal conditions such as ``"no_acceptances"``,
    ``"degenerate_chain"`` or ``"budget_exhausted"``. ``rounds`` holds
    per-round statistics for SMC.
    """

    samples: np.ndarray
    weights: np.ndarray
    n_simulations: int
    epsilon: float
    ess: float
    method: str = "rejection"
    acceptance_rate: float = float("nan")
    flags: List[str] = field(default_factory=list)
    rounds: List[dict] = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def sims_per_effective_sample(self) -> float:
        return self.n_simulations / self.ess


@dataclass(frozen=True)
class McmcConfig:
    proposal_std: float
    n_steps: int
    init: tuple
    max_simulations: int = DEFAULT_BUDGET

    def __post_init__(self):
        if not self.proposal_std > 0:
            raise ValueError("proposal_std must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        object.__setattr__(self, "init", tuple(float(v) for v in np.ravel(self.init)))


@dataclass(frozen=True)
class SmcConfig:
    n_particles: int
    eps_initial: float
    eps_decay: float
    n_rounds: int
    max_simulations: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be >= 2")
        if not 0.0 < self.eps_decay < 1.0:
            raise ValueError("eps_decay must lie in (0, 1)")
        if not self.eps_initial > 0 or self.n_rounds < 1:
            raise ValueError("need eps_initial > 0 and n_rounds >= 1")


class _Counter:
    """Simulate and measure distances, counting every call against a budget."""

    def __init__(self, simulator, x_o, budget):
        self.single, self.batch = simulator_fns(simulator)
        self.x_o = np.ravel(np.asarray(x_o, dtype=np.float64))
        self.budget = budget
        self.n = 0

    def distances(self, thetas, rng) -> np.ndarray:
        """Distances for each row; exploded simulations get ``inf``."""
        thetas = np.atleast_2d(thetas)
        if self.n + len(thetas) > self.budget:
            thetas = thetas[: max(self.budget - self.n, 0)]
        self.n += len(thetas)
        if len(thetas) == 0:
            return np.empty(0)
        if self.batch is not None:
            xs = np.asarray(self.batch(thetas, rng), dtype=np.float64)
            return np.linalg.norm(xs - self.x_o, axis=1)
        out = np.empty(len(thetas))
        for i, theta in enumerate(thetas):
            try:
                x = np.ravel(np.asarray(self.single(theta, rng), dtype=np.float64))
                out[i] = np.linalg.norm(x - self.x_o)
            except SimulationExploded:
                out[i] = np.inf
        return out

    @property
    def exhausted(self) -> bool:
        return self.n >= self.budget


# --------------------------------------------------------------------------
# rejection


def rejection_abc(
    simulator,
    prior,
    x_o,
    epsilon: float,
    n_accept_target: int,
    rng: np.random.Generator,
    max_simulations: int = DEFAULT_BUDGET,
    batch_size: int = 1000,
) -> AbcResult:
    """Rejection sampling from the prior with acceptance ``||x - x_o|| < epsilon``.

    Raises
    ------
    BudgetExhausted
        When ``max_simulations`` calls yield fewer than ``n_accept_target``
        acceptances.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    counter = _Counter(simulator, x_o, max_simulations)
    accepted = []
    n_acc = 0
    while n_acc < n_accept_target:
        if counter.exhausted:
            raise BudgetExhausted(n_acc, counter.n)
        size = batch_size if counter.batch is not None else min(batch_size, n_accept_target - n_acc)
        thetas = prior.sample(rng, size)
        d = counter.distances(thetas, rng)
        keep = thetas[: len(d)][d < epsilon]
        accepted.append(keep)
        n_acc += len(keep)
    # batched calls past the target ran, so they stay charged
    samples = np.concatenate(accepted)[:n_accept_target]
    n = len(samples)
    return AbcResult(samples, np.full(n, 1.0 / n), counter.n, float(epsilon), float(n),
                     "rejection", n / counter.n)


# --------------------------------------------------------------------------
# MCMC


def mcmc_abc(simulator, prior, x_o, epsilon: float, cfg: McmcConfig, rng: np.random.Generator) -> AbcResult:
    """Likelihood-free Metropolis-Hastings with a spherical Gaussian random walk.

    A proposal is accepted when a uniform draw falls below the prior ratio
    and its simulation lands within ``epsilon``. The prior test comes first,
    so proposals it rejects cost no simulation. The returned chain holds
    ``n_steps`` states, starting with ``cfg.init``.
    """
    counter = _Counter(simulator, x_o, cfg.max_simulations)
    theta = np.array(cfg.init)
    lp = float(prior.logpdf(theta))
    chain = np.empty((cfg.n_steps, theta.size))
    chain[0] = theta
    n_acc = 0
    flags = []
    for t in range(1, cfg.n_steps):
        cand = theta + cfg.proposal_std * rng.standard_normal(theta.size)
        lp_cand = float(prior.logpdf(cand))
        if np.log(rng.random()) < lp_cand - lp:
            if counter.exhausted:
                flags.append("budget_exhausted")
                chain = chain[:t]
                break
            if counter.distances(cand, rng)[0] < epsilon:
                theta, lp = cand, lp_cand
                n_acc += 1
        chain[t] = theta
    if n_acc == 0:
        flags.append("no_acceptances")
    try:
        ess = ess_mcmc(chain)
    except DegenerateChain:
        flags.append("degenerate_chain")
        ess = 1.0
    n = len(chain)
    return AbcResult(chain, np.full(n, 1.0 / n), counter.n, float(epsilon), ess, "mcmc",
                     n_acc / max(n - 1, 1), flags)


# --------------------------------------------------------------------------
# SMC


def _kernel_logdens(cand, particles, weights, var):
    # log sum_j w_j N(cand | particle_j, diag(var)), for each candidate row
    d = (cand[:, None, :] - particles[None, :, :]) ** 2 / var
    logk = -0.5 * d.sum(axis=2) - 0.5 * np.sum(np.log(2 * np.pi * var))
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    a = logk + logw[None, :]
    m = a.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=1, keepdims=True)))[:, 0]


def _weighted_var(particles, weights):
    mean = weights @ particles
    return weights @ (particles - mean) ** 2


def smc_abc(simulator, prior, x_o, cfg: SmcConfig, rng: np.random.Generator, batch_size: int = 200) -> AbcResult:
    """Population Monte Carlo ABC with an exponentially decaying tolerance.

    Round 0 is rejection ABC at ``eps_initial``. Round ``r`` resamples the
    previous population, perturbs it with a Gaussian kernel whose per-dimension
    variance is twice the weighted particle variance, keeps perturbations
    landing within ``eps_initial * eps_decay**r``, and reweights them by
    ``prior / sum_j w_j K(theta | theta_j)``. When the budget runs out, the last
    completed round is returned with the ``"budget_exhausted"`` flag.
    """
    n = cfg.n_particles
    first = rejection_abc(simulator, prior, x_o, cfg.eps_initial, n, rng, cfg.max_simulations)
    particles, weights = first.samples, first.weights
    total = first.n_simulations
    rounds = [dict(round=0, epsilon=cfg.eps_initial, n_simulations=total, acceptance_rate=first.acceptance_rate)]
    eps = cfg.eps_initial
    flags = []
    for r in range(1, cfg.n_rounds):
        eps_r = cfg.eps_initial * cfg.eps_decay**r
        var = 2.0 * _weighted_var(particles, weights)
        var = np.maximum(var, 1e-300)
        counter = _Counter(simulator, x_o, cfg.max_simulations - total)
        new = []
        n_new = 0
        while n_new < n and not counter.exhausted:
            idx = rng.choice(n, size=batch_size, p=weights)
            cand = particles[idx] + np.sqrt(var) * rng.standard_normal((batch_size, particles.shape[1]))
            cand = cand[np.isfinite(prior.logpdf(cand))]
            if len(cand) == 0:
                continue
            if counter.batch is None:
                cand = cand[: n - n_new]
            d = counter.distances(cand, rng)
            keep = cand[: len(d)][d < eps_r]
            new.append(keep)
            n_new += len(keep)
        if n_new < n:
            total += counter.n
            flags.append("budget_exhausted")
            log.warning("smc round %d ran out of budget; returning round %d", r, r - 1)
            break
        cand = np.concatenate(new)[:n]
        logw = prior.logpdf(cand) - _kernel_logdens(cand, particles, weights, var)
        w = np.exp(logw - logw.max())
        weights = w / w.sum()
        particles = cand
        total += counter.n
        eps = eps_r
        rounds.append(dict(round=r, epsilon=eps_r, n_simulations=counter.n, acceptance_rate=n / counter.n))
    return AbcResult(particles, weights, total, float(eps), ess_weighted(weights), "smc",
                     n / total, flags, rounds)


# --------------------------------------------------------------------------
# effective sample size


def _autocorr(x):
    n = x.size
    d = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def ess_mcmc(chain) -> float:
    """Minimum over dimensions of ``N / (1 + 2 sum_l r_l)``.

    The sum runs over lags ``l >= 1`` up to, but excluding, the first
    non-positive autocorrelation estimate; if ``r_1 <= 0`` the dimension
    counts as ``N`` effective samples.

    Raises
    ------
    DegenerateChain
        If some dimension has zero variance.
    """
    chain = np.asarray(chain, dtype=np.float64)
    if chain.ndim == 1:
        chain = chain[:, None]
    n = chain.shape[0]
    if n < 10:
        raise ValueError("chain must hold at least 10 states")
    out = np.inf
    for d in range(chain.shape[1]):
        col = chain[:, d]
        if not np.var(col) > 0:
            raise DegenerateChain(f"dimension {d} has zero variance")
        r = _autocorr(col)[1:]
        nonpos = np.flatnonzero(r <= 0)
        cut = nonpos[0] if nonpos.size else r.size
        out = min(out, n / (1.0 + 2.0 * r[:cut].sum()))
    return float(out)


def ess_weighted(weights) -> float:
    """``(sum w)^2 / sum w^2``, which is ``1 / sum w_n^2`` on the simplex.

    Weights are scaled by their maximum first, so uniform weights give
    exactly ``N`` and a single nonzero weight gives exactly 1.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not w.max() > 0:
        raise ValueError("weights must be a non-empty, non-negative, not-all-zero vector")
    r = w / w.max()
    return float(r.sum() ** 2 / np.sum(r * r))


def fit_samples(result: AbcResult, kind: str = "gaussian", K: int = 8, rng: Optional[np.random.Generator] = None):
    """Parametric fit of an ABC population: weighted Gaussian or K-component EM mixture."""
    from .gmath import GaussianMixture, fit_gaussian_weighted, fit_mixture_em

    if kind == "gaussian":
        return GaussianMixture.single(fit_gaussian_weighted(result.samples, result.weights))
    if kind == "em":
        samples = result.samples
        if not np.allclose(result.weights, result.weights[0]):
            rng = rng or np.random.default_rng(0)
            samples = samples[rng.choice(len(samples), size=len(samples), p=result.weights)]
        return fit_mixture_em(samples, K, rng or np.random.default_rng(0))
    raise ValueError(f"unknown fit kind {kind!r}")
