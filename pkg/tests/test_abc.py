import numpy as np
import pytest
from scipy import stats

from lfi.abc import (
    McmcConfig,
    SmcConfig,
    ess_mcmc,
    ess_weighted,
    fit_samples,
    mcmc_abc,
    rejection_abc,
    smc_abc,
)
from lfi.errors import BudgetExhausted, DegenerateChain
from lfi.gmath import UniformBoxPrior
from lfi.simulators import MogProblem


def identity(theta, rng):
    return np.asarray(theta, dtype=float)


class CountingSimulator:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, theta, rng):
        self.calls += 1
        return self.fn(theta, rng)


UNIT_BOX = UniformBoxPrior([-1.0], [1.0])


# rejection


def test_rejection_infinite_epsilon_returns_prior():
    res = rejection_abc(identity, UNIT_BOX, [0.0], 1e9, 20_000, np.random.default_rng(0))
    assert res.acceptance_rate == 1.0
    assert abs(res.samples.mean()) < 4 * np.sqrt(1 / 3 / 20_000)
    assert res.samples.var() == pytest.approx(1 / 3, abs=0.01)


def test_rejection_identity_geometry():
    res = rejection_abc(identity, UNIT_BOX, [0.0], 0.1, 2000, np.random.default_rng(1))
    assert res.acceptance_rate == pytest.approx(0.1, abs=0.01)
    assert np.all(np.abs(res.samples) < 0.1)
    assert stats.kstest(res.samples[:, 0], stats.uniform(-0.1, 0.2).cdf).pvalue > 1e-3
    assert res.ess == 2000.0
    np.testing.assert_allclose(res.weights, 1 / 2000)


def test_rejection_counts_every_call():
    sim = CountingSimulator(identity)
    res = rejection_abc(sim, UNIT_BOX, [0.0], 0.2, 100, np.random.default_rng(2))
    assert res.n_simulations == sim.calls


def test_rejection_budget():
    with pytest.raises(BudgetExhausted):
        rejection_abc(identity, UNIT_BOX, [0.0], 1e-6, 10, np.random.default_rng(3), max_simulations=500)


def test_rejection_rejects_bad_epsilon():
    with pytest.raises(ValueError):
        rejection_abc(identity, UNIT_BOX, [0.0], 0.0, 10, np.random.default_rng(0))


def test_rejection_mog_heavier_tails():
    p = MogProblem()
    res = rejection_abc(p.simulate, p.prior, p.x_o, 1.0, 2000, np.random.default_rng(4))
    exact_tail = 0.5 * 2 * stats.norm.sf(2.0)  # narrow mode has no mass beyond 2
    assert np.mean(np.abs(res.samples) > 2.0) > exact_tail + 0.02


# MCMC


def test_mcmc_all_accept_no_drift():
    box = UniformBoxPrior([-1e9], [1e9])
    cfg = McmcConfig(proposal_std=1.0, n_steps=100_000, init=[3.0])
    res = mcmc_abc(identity, box, [0.0], np.inf, cfg, np.random.default_rng(5))
    assert res.acceptance_rate == 1.0
    # the mean of a random walk has sd sigma * sqrt(n / 3)
    assert abs(res.samples.mean() - 3.0) < 4 * np.sqrt(100_000 / 3)


def test_mcmc_frozen_chain_flagged():
    cfg = McmcConfig(proposal_std=1e-300, n_steps=200, init=[0.05])
    res = mcmc_abc(identity, UNIT_BOX, [0.0], 0.1, cfg, np.random.default_rng(6))
    assert np.all(res.samples == 0.05)
    assert "degenerate_chain" in res.flags


def test_mcmc_identity_stationary_uniform():
    cfg = McmcConfig(proposal_std=0.05, n_steps=50_000, init=[0.0])
    res = mcmc_abc(identity, UNIT_BOX, [0.0], 0.1, cfg, np.random.default_rng(7))
    counts, _ = np.histogram(res.samples[:, 0], bins=4, range=(-0.1, 0.1))
    assert np.all(np.abs(res.samples) < 0.1)
    # effective count governs the spread of bin frequencies
    sd = np.sqrt(0.25 * 0.75 / res.ess)
    np.testing.assert_allclose(counts / counts.sum(), 0.25, atol=4 * sd)


def test_mcmc_detailed_balance():
    cfg = McmcConfig(proposal_std=0.05, n_steps=100_000, init=[0.0])
    res = mcmc_abc(identity, UNIT_BOX, [0.0], 0.1, cfg, np.random.default_rng(8))
    b = np.minimum((res.samples[:, 0] + 0.1) // 0.05, 3).astype(int)
    flows = np.zeros((4, 4))
    np.add.at(flows, (b[:-1], b[1:]), 1)
    # jumps that skip a bin are not forced to balance by the geometry of a line
    for i, j in [(0, 2), (1, 3), (0, 3)]:
        total = flows[i, j] + flows[j, i]
        assert total > 100
        assert abs(flows[i, j] - flows[j, i]) <= 4 * np.sqrt(total)


def test_mcmc_prior_rejection_costs_nothing():
    sim = CountingSimulator(identity)
    cfg = McmcConfig(proposal_std=10.0, n_steps=500, init=[0.0])
    res = mcmc_abc(sim, UNIT_BOX, [0.0], 5.0, cfg, np.random.default_rng(9))
    assert res.n_simulations == sim.calls < 499


def test_mcmc_config_validation():
    with pytest.raises(ValueError):
        McmcConfig(proposal_std=0.0, n_steps=10, init=[0.0])


# SMC


def test_smc_single_round_is_rejection():
    a = smc_abc(identity, UNIT_BOX, [0.0], SmcConfig(100, 0.3, 0.5, 1), np.random.default_rng(10))
    b = rejection_abc(identity, UNIT_BOX, [0.0], 0.3, 100, np.random.default_rng(10))
    assert np.array_equal(a.samples, b.samples)
    assert a.n_simulations == b.n_simulations


def test_smc_identity_concentrates():
    cfg = SmcConfig(n_particles=500, eps_initial=0.8, eps_decay=0.5, n_rounds=4)
    res = smc_abc(identity, UNIT_BOX, [0.0], cfg, np.random.default_rng(11))
    assert res.epsilon == pytest.approx(0.1)
    assert np.all(np.abs(res.samples) < 0.1)
    assert res.weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert 1.0 <= res.ess <= 500
    assert len(res.rounds) == 4


def test_smc_counts_every_call():
    sim = CountingSimulator(identity)
    res = smc_abc(sim, UNIT_BOX, [0.0], SmcConfig(100, 0.5, 0.5, 3), np.random.default_rng(12))
    assert res.n_simulations == sim.calls


def test_smc_mog_keeps_both_modes():
    p = MogProblem()
    cfg = SmcConfig(n_particles=1000, eps_initial=2.0, eps_decay=0.7, n_rounds=5)
    res = smc_abc(p.simulate, p.prior, p.x_o, cfg, np.random.default_rng(13))
    near = np.sum(res.weights[np.abs(res.samples[:, 0]) < 0.2])
    far = np.sum(res.weights[np.abs(res.samples[:, 0]) > 1.0])
    assert near > 0.2 and far > 0.05


def test_smc_budget_returns_last_round():
    cfg = SmcConfig(n_particles=50, eps_initial=0.5, eps_decay=0.01, n_rounds=3, max_simulations=3000)
    res = smc_abc(identity, UNIT_BOX, [0.0], cfg, np.random.default_rng(14))
    assert "budget_exhausted" in res.flags
    assert res.epsilon == 0.5


def test_smc_config_validation():
    with pytest.raises(ValueError):
        SmcConfig(n_particles=1, eps_initial=1.0, eps_decay=0.5, n_rounds=2)
    with pytest.raises(ValueError):
        SmcConfig(n_particles=10, eps_initial=1.0, eps_decay=1.0, n_rounds=2)


# effective sample size


def test_ess_weighted_limits():
    assert ess_weighted(np.full(100, 0.01)) == 100.0
    assert ess_weighted(np.eye(100)[7]) == 1.0


def test_ess_weighted_arithmetic():
    assert ess_weighted([0.5, 0.25, 0.25]) == pytest.approx(8 / 3, rel=1e-15)


def test_ess_weighted_rejects_negative():
    with pytest.raises(ValueError):
        ess_weighted([0.5, -0.1, 0.6])


def test_ess_mcmc_iid():
    chain = np.random.default_rng(15).standard_normal((10_000, 3))
    assert ess_mcmc(chain) == pytest.approx(10_000, rel=0.15)


def test_ess_mcmc_duplicated_states():
    chain = np.repeat(np.random.default_rng(16).standard_normal(5000), 2)
    assert ess_mcmc(chain) == pytest.approx(5000, rel=0.2)


def test_ess_mcmc_constant_chain():
    with pytest.raises(DegenerateChain):
        ess_mcmc(np.ones((100, 2)))


# parametric fits


def test_fit_samples_gaussian():
    res = rejection_abc(identity, UNIT_BOX, [0.0], 0.5, 5000, np.random.default_rng(17))
    g = fit_samples(res, "gaussian").components[0]
    assert g.mean[0] == pytest.approx(0.0, abs=0.03)
    assert g.covariance[0, 0] == pytest.approx(1 / 12, rel=0.1)


def test_fit_samples_unknown_kind():
    res = rejection_abc(identity, UNIT_BOX, [0.0], 0.5, 20, np.random.default_rng(18))
    with pytest.raises(ValueError):
        fit_samples(res, "kde")
