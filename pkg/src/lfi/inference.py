"""Posterior learning from simulations with an adaptively trained proposal prior.

The conditional density ``q(theta | x)`` learned from pairs drawn with
``theta ~ p_tilde`` approximates the posterior under ``p_tilde``. Reweighting
by ``prior / p_tilde`` recovers the posterior under the actual prior, which
is a Gaussian mixture again when ``p_tilde`` is Gaussian.

Two drivers are provided. :func:`run_algorithm1` iterates a single-component
MDN-SVI to a Gaussian proposal concentrated around the posterior;
:func:`run_algorithm2` trains the final conditional density on simulations
drawn from that proposal (or from the prior).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from .data import SimDataset, simulator_fns
from .errors import NonPositiveDefinite, SimulationExploded
from .gmath import (
    Gaussian,
    GaussianMixture,
    UniformBoxPrior,
    divide_mixture_by_gaussian,
    kl_gaussian,
    multiply_mixture_by_gaussian,
)
from .mdn import MdnNet, TrainConfig, init_mdn, mdn_forward, replicate_components, train_mdn
from .svi import (
    DEFAULT_LAMBDA,
    SviNet,
    replicate_svi_components,
    svi_forward_predict,
    svi_from_mdn,
    train_mdn_svi,
)

log = logging.getLogger(__name__)

Prior = Union[UniformBoxPrior, Gaussian]


@dataclass(frozen=True)
class InferenceConfig:
    """Settings shared by both drivers.

    ``x_o`` is the observation the posterior is conditioned on. Network
    sizes apply to freshly created nets; ``init_log_var`` is the starting
    weight log variance of a fresh MDN-SVI.
    """

    x_o: tuple
    n_per_iteration: int = 300
    max_iterations: int = 10
    convergence_kl_tol: float = 0.05
    K_final: int = 1
    n_final: int = 2000
    rng_seed: int = 0
    hidden_proposal: tuple = (50,)
    hidden_final: tuple = (50,)
    epochs_proposal: int = 300
    epochs_final: int = 300
    learning_rate: float = 1e-3
    minibatch_size: int = 100
    svi_lambda: float = DEFAULT_LAMBDA
    init_log_var: float = -5.0
    final_svi: bool = False
    replicate_noise: float = 1e-3
    outside_mass_samples: int = 20000

    def __post_init__(self):
        object.__setattr__(self, "x_o", tuple(float(v) for v in np.ravel(self.x_o)))
        object.__setattr__(self, "hidden_proposal", tuple(int(h) for h in self.hidden_proposal))
        object.__setattr__(self, "hidden_final", tuple(int(h) for h in self.hidden_final))
        counts = (self.n_per_iteration, self.max_iterations, self.K_final, self.n_final)
        if min(counts) < 1:
            raise ValueError("counts must be >= 1")
        if not self.convergence_kl_tol > 0:
            raise ValueError("convergence_kl_tol must be positive")

    @property
    def x_o_array(self) -> np.ndarray:
        return np.array(self.x_o)

    def train_config(self, n_epochs, seed) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.minibatch_size, n_epochs, int(seed))


# --------------------------------------------------------------------------
# prior / proposal correction


def _same_gaussian(a, b) -> bool:
    if not (isinstance(a, Gaussian) and isinstance(b, Gaussian)) or a.dim != b.dim:
        return False
    return np.allclose(a.mean, b.mean, rtol=0, atol=1e-12) and np.allclose(
        a.prec_chol, b.prec_chol, rtol=0, atol=1e-12
    )


def posterior_estimate(q_at_xo: GaussianMixture, prior: Prior, proposal: Optional[Gaussian]) -> GaussianMixture:
    """Correct a conditional learned under ``proposal`` to the posterior under ``prior``.

    Parameters
    ----------
    q_at_xo : GaussianMixture
        Learned conditional evaluated at the observation.
    prior : UniformBoxPrior or Gaussian
    proposal : Gaussian or None
        Distribution the training parameters were drawn from; ``None`` means
        the prior itself.

    Returns
    -------
    GaussianMixture
        ``q`` unchanged when the proposal is the prior. With a uniform prior,
        ``q / proposal``; with a Gaussian prior, ``q * prior / proposal``.
        Both are normalized over the whole space.

    Raises
    ------
    NonPositiveDefinite
        If some component of ``q`` is broader than the proposal.
    """
    if proposal is None or _same_gaussian(prior, proposal):
        return q_at_xo
    if isinstance(prior, Gaussian):
        return divide_mixture_by_gaussian(multiply_mixture_by_gaussian(q_at_xo, prior), proposal)
    if isinstance(prior, UniformBoxPrior):
        return divide_mixture_by_gaussian(q_at_xo, proposal)
    raise TypeError(f"unsupported prior type {type(prior).__name__}")


def proposal_converged(prev: Gaussian, nxt: Gaussian, tol: float) -> bool:
    """True iff the symmetrized KL between successive proposals is below ``tol``."""
    return symmetric_kl(prev, nxt) < tol


def symmetric_kl(a: Gaussian, b: Gaussian) -> float:
    return 0.5 * (kl_gaussian(a, b) + kl_gaussian(b, a))


def mass_outside(posterior: GaussianMixture, prior: Prior, rng, n: int) -> float:
    """Monte Carlo estimate of the posterior mass outside a box prior (0 for Gaussian priors)."""
    if not isinstance(prior, UniformBoxPrior) or n < 1:
        return 0.0
    samples = posterior.sample(rng, n)
    return float(1.0 - np.mean(prior.contains(samples)))


# --------------------------------------------------------------------------
# simulation


def simulate_dataset(
    simulator,
    sampler,
    n: int,
    rng: np.random.Generator,
    support: Optional[UniformBoxPrior] = None,
    tag: str = "prior",
    max_draws_per_point: int = 10_000,
) -> SimDataset:
    """Draw ``n`` pairs with ``theta ~ sampler`` and ``x ~ simulator(theta)``.

    Parameters outside ``support`` are redrawn before simulating, so a
    Gaussian proposal is effectively truncated to the prior box; the
    truncated density is proportional to the proposal inside the box, which
    leaves the correction in :func:`posterior_estimate` unchanged. Draws whose
    simulation raises :class:`SimulationExploded` are replaced by fresh draws
    and still counted in ``n_simulations``.
    """
    sim, batch = simulator_fns(simulator)
    thetas = np.empty((n, sampler.dim))
    filled = 0
    tries = 0
    while filled < n:
        draw = sampler.sample(rng, n - filled)
        if support is not None:
            draw = draw[support.contains(draw)]
        tries += n - filled
        if tries > max_draws_per_point * n:
            raise RuntimeError("proposal puts almost no mass inside the prior support")
        thetas[filled : filled + len(draw)] = draw
        filled += len(draw)
    if batch is not None:
        xs = np.asarray(batch(thetas, rng), dtype=np.float64)
        return SimDataset(thetas, xs, tag, n)
    xs = []
    n_sims = 0
    for i in range(n):
        theta = thetas[i]
        while True:
            n_sims += 1
            try:
                xs.append(np.asarray(sim(theta, rng), dtype=np.float64).ravel())
                break
            except SimulationExploded:
                theta = _redraw(sampler, support, rng)
                thetas[i] = theta
    return SimDataset(thetas, np.array(xs), tag, n_sims)


def _redraw(sampler, support, rng):
    while True:
        theta = sampler.sample(rng, 1)[0]
        if support is None or support.contains(theta[None, :])[0]:
            return theta


# --------------------------------------------------------------------------
# proposal prior learning


@dataclass
class ProposalFit:
    """Result of :func:`run_algorithm1`; unpacks as ``(proposal, net, trace)``."""

    proposal: Gaussian
    net: SviNet
    trace: List[Gaussian]
    n_simulations: int
    converged: bool
    n_iterations: int
    n_retries: int = 0
    sym_kl: List[float] = field(default_factory=list)

    def __iter__(self):
        return iter((self.proposal, self.net, self.trace))


def _as_gaussian(m: GaussianMixture) -> Gaussian:
    if m.n_components != 1:
        raise ValueError("expected a single-component mixture")
    return m.components[0]


def _support(prior):
    return prior if isinstance(prior, UniformBoxPrior) else None


def run_algorithm1(simulator, prior: Prior, cfg: InferenceConfig, net: Optional[SviNet] = None) -> ProposalFit:
    """Fit a Gaussian proposal prior by iterating simulate, retrain, correct.

    Each iteration draws ``n_per_iteration`` pairs from the current proposal,
    continues training the single-component MDN-SVI on that batch only, and
    sets the proposal to the corrected conditional at ``x_o``. Iteration stops
    once successive proposals are within ``convergence_kl_tol`` symmetrized KL
    or after ``max_iterations``.

    Raises
    ------
    NonPositiveDefinite
        If the correction fails twice in a row on fresh batches.
    """
    rng = np.random.default_rng([cfg.rng_seed, 1])
    x_o = cfg.x_o_array
    support = _support(prior)
    if net is None:
        base = init_mdn(len(x_o), prior.dim, 1, cfg.hidden_proposal, rng)
        net = svi_from_mdn(base, cfg.init_log_var, cfg.svi_lambda)
    proposal: Optional[Gaussian] = None
    trace: List[Gaussian] = []
    sym: List[float] = []
    n_sims = 0
    retries = 0
    converged = False
    it = 0
    while it < cfg.max_iterations:
        sampler = prior if proposal is None else proposal
        failures = 0
        while True:
            data = simulate_dataset(simulator, sampler, cfg.n_per_iteration, rng, support,
                                    "prior" if proposal is None else "proposal")
            n_sims += data.n_simulations
            net = train_mdn_svi(net, data, cfg.train_config(cfg.epochs_proposal, rng.integers(2**32)))
            q = svi_forward_predict(net, x_o)
            try:
                new = _as_gaussian(posterior_estimate(q, prior, proposal))
                break
            except NonPositiveDefinite as exc:
                failures += 1
                retries += 1
                log.warning("proposal update failed at iteration %d (component %s)", it + 1, exc.component)
                if failures > 1:
                    raise NonPositiveDefinite(
                        exc.component,
                        f"proposal update failed twice at iteration {it + 1}; "
                        f"learned covariance {q.components[0].covariance.tolist()} is broader than "
                        f"proposal covariance {proposal.covariance.tolist()}",
                    ) from exc
        it += 1
        trace.append(new)
        if proposal is not None:
            sym.append(symmetric_kl(proposal, new))
            log.info("iteration %d: symmetrized KL %.4g", it, sym[-1])
            if sym[-1] < cfg.convergence_kl_tol:
                proposal = new
                converged = True
                break
        proposal = new
    return ProposalFit(proposal, net, trace, n_sims, converged, it, retries, sym)


# --------------------------------------------------------------------------
# final posterior learning


@dataclass
class PosteriorFit:
    """Result of :func:`run_algorithm2`; unpacks as ``(posterior, net)``."""

    posterior: GaussianMixture
    net: Union[MdnNet, SviNet]
    n_simulations: int
    mass_outside_prior: float
    raw_conditional: GaussianMixture

    def __iter__(self):
        return iter((self.posterior, self.net))


def _forward(net, x_o) -> GaussianMixture:
    return svi_forward_predict(net, x_o) if isinstance(net, SviNet) else mdn_forward(net, x_o)


def run_algorithm2(
    simulator,
    prior: Prior,
    proposal: Optional[Gaussian],
    init: Union[MdnNet, SviNet, None],
    cfg: InferenceConfig,
) -> PosteriorFit:
    """Train the final conditional density and correct it to the posterior.

    ``n_final`` pairs are drawn from ``proposal`` (the prior when ``None``).
    A one-component ``init`` is replicated to ``K_final`` components. An
    ``init`` of type :class:`SviNet` is trained with the variational bound,
    an :class:`MdnNet` by maximum likelihood. With no ``init`` a fresh net of
    ``hidden_final`` units is created, conventional unless ``final_svi``.
    """
    rng = np.random.default_rng([cfg.rng_seed, 2])
    x_o = cfg.x_o_array
    if init is None:
        base = init_mdn(len(x_o), prior.dim, cfg.K_final, cfg.hidden_final, rng)
        init = svi_from_mdn(base, cfg.init_log_var, cfg.svi_lambda) if cfg.final_svi else base
    elif init.n_components == 1 and cfg.K_final > 1:
        if isinstance(init, SviNet):
            init = replicate_svi_components(init, cfg.K_final, rng, cfg.replicate_noise)
        else:
            init = replicate_components(init, cfg.K_final, rng, cfg.replicate_noise)
    sampler = prior if proposal is None else proposal
    data = simulate_dataset(simulator, sampler, cfg.n_final, rng, _support(prior),
                            "prior" if proposal is None else "proposal")
    tcfg = cfg.train_config(cfg.epochs_final, rng.integers(2**32))
    net = train_mdn_svi(init, data, tcfg) if isinstance(init, SviNet) else train_mdn(init, data, tcfg)
    q = _forward(net, x_o)
    posterior = posterior_estimate(q, prior, proposal)
    outside = mass_outside(posterior, prior, rng, cfg.outside_mass_samples)
    return PosteriorFit(posterior, net, data.n_simulations, outside, q)
