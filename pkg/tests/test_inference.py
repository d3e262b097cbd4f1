import numpy as np
import pytest

from lfi.errors import NonPositiveDefinite
from lfi.gmath import Gaussian, GaussianMixture, UniformBoxPrior, kl_gaussian
from lfi.inference import (
    InferenceConfig,
    posterior_estimate,
    proposal_converged,
    run_algorithm1,
    run_algorithm2,
    simulate_dataset,
    symmetric_kl,
)
from lfi.mdn import TrainConfig, init_mdn, mdn_logprob_batch, replicate_components, train_mdn
from lfi.simulators import LinearGaussianProblem


def g1(mean, var):
    return Gaussian.from_covariance([mean], [[var]])


def grid_density(logf, axis):
    lf = logf(axis[:, None])
    f = np.exp(lf - lf.max())
    return f / (f.sum() * (axis[1] - axis[0]))


# posterior correction


def test_no_proposal_returns_q():
    q = GaussianMixture([0.3, 0.7], (g1(-1, 0.5), g1(2, 1.5)))
    assert posterior_estimate(q, UniformBoxPrior([-10.0], [10.0]), None) is q


def test_uniform_prior_divides_by_proposal():
    out = posterior_estimate(GaussianMixture.single(g1(1, 0.5)), UniformBoxPrior([-10.0], [10.0]), g1(0, 1))
    assert out.components[0].mean[0] == pytest.approx(2.0, abs=1e-12)
    assert out.components[0].covariance[0, 0] == pytest.approx(1.0, rel=1e-12)
    axis = np.linspace(-8, 12, 20001)
    ref = grid_density(lambda t: g1(1, 0.5).logpdf(t) - g1(0, 1).logpdf(t), axis)
    np.testing.assert_allclose(out.pdf(axis[:, None]), ref, atol=1e-6)


def test_gaussian_prior_equal_to_proposal_cancels():
    q = GaussianMixture.single(g1(0.3, 0.5))
    out = posterior_estimate(q, g1(0, 1), g1(0, 1))
    pts = np.linspace(-5, 5, 101)[:, None]
    assert np.array_equal(out.logpdf(pts), q.logpdf(pts))


def test_gaussian_prior_folded_in():
    q = GaussianMixture([0.4, 0.6], (g1(0.2, 0.3), g1(0.8, 0.2)))
    prior, proposal = g1(0.5, 2.0), g1(0.4, 0.5)
    out = posterior_estimate(q, prior, proposal)
    axis = np.linspace(-6, 6, 24001)
    ref = grid_density(lambda t: q.logpdf(t) + prior.logpdf(t) - proposal.logpdf(t), axis)
    np.testing.assert_allclose(out.pdf(axis[:, None]), ref, atol=1e-6)


def test_correction_propagates_division_failure():
    with pytest.raises(NonPositiveDefinite):
        posterior_estimate(GaussianMixture.single(g1(0, 2)), UniformBoxPrior([-10.0], [10.0]), g1(0, 1))


# convergence rule


def test_converged_identical():
    g = g1(0.3, 2.0)
    assert proposal_converged(g, g, 1e-12)


def test_symmetric_kl_unit_shift():
    assert symmetric_kl(g1(0, 1), g1(1, 1)) == pytest.approx(0.5, abs=1e-12)
    assert not proposal_converged(g1(0, 1), g1(1, 1), 0.4)


def test_converged_small_shift():
    assert symmetric_kl(g1(0, 1), g1(0.1, 1)) == pytest.approx(0.005, abs=1e-12)
    assert proposal_converged(g1(0, 1), g1(0.1, 1), 0.01)


def test_config_validation():
    with pytest.raises(ValueError):
        InferenceConfig(x_o=[0.0], n_final=0)
    with pytest.raises(ValueError):
        InferenceConfig(x_o=[0.0], convergence_kl_tol=0.0)


# data generation


def test_simulate_dataset_records_proposal():
    p = LinearGaussianProblem()
    data = simulate_dataset(p.simulate, p.prior, 50, np.random.default_rng(0), None, "prior")
    assert data.theta.shape == (50, 1) and data.x.shape == (50, 1)
    assert data.proposal_used == "prior" and data.n_simulations == 50


def test_simulate_dataset_truncates_to_box():
    box = UniformBoxPrior([-0.1], [0.1])
    data = simulate_dataset(lambda t, rng: t, g1(0, 1), 200, np.random.default_rng(1), box, "proposal")
    assert np.all(np.abs(data.theta) <= 0.1)


# drivers


@pytest.mark.slow
def test_algorithm1_linear_gaussian():
    p = LinearGaussianProblem()
    cfg = InferenceConfig(x_o=p.x_o, n_per_iteration=2000, convergence_kl_tol=0.01, hidden_proposal=(20,))
    fit = run_algorithm1(p.simulate, p.prior, cfg)
    truth = p.true_posterior()
    assert fit.proposal.mean[0] == pytest.approx(truth.mean[0], rel=0.1)
    assert fit.proposal.covariance[0, 0] == pytest.approx(truth.covariance[0, 0], rel=0.1)
    assert fit.n_simulations == 2000 * fit.n_iterations


def test_algorithm1_deterministic_simulator_narrows():
    cfg = InferenceConfig(x_o=[0.5], hidden_proposal=(20,), max_iterations=5, convergence_kl_tol=1e-12)
    fit = run_algorithm1(lambda t, rng: np.asarray(t, dtype=float), g1(0, 1), cfg)
    variances = [g.covariance[0, 0] for g in fit.trace]
    assert len(variances) == 5
    assert np.all(np.diff(variances) < 0)
    for g in fit.trace:
        assert np.all(np.linalg.eigvalsh(g.covariance) > 0)


def test_algorithm1_unpacks():
    p = LinearGaussianProblem()
    cfg = InferenceConfig(x_o=p.x_o, n_per_iteration=100, max_iterations=2, epochs_proposal=20, hidden_proposal=(5,))
    proposal, net, trace = run_algorithm1(p.simulate, p.prior, cfg)
    assert net.n_components == 1 and len(trace) >= 1 and trace[-1] is proposal


def test_algorithm2_linear_gaussian():
    p = LinearGaussianProblem()
    cfg = InferenceConfig(x_o=p.x_o, n_final=5000, epochs_final=100, hidden_final=(20,))
    fit = run_algorithm2(p.simulate, p.prior, None, None, cfg)
    assert kl_gaussian(p.true_posterior(), fit.posterior.components[0]) < 0.05
    assert fit.n_simulations == 5000


def test_algorithm2_deterministic():
    p = LinearGaussianProblem()
    cfg = InferenceConfig(x_o=p.x_o, n_final=200, epochs_final=5, hidden_final=(5,), rng_seed=3)
    a = run_algorithm2(p.simulate, p.prior, None, None, cfg).posterior
    b = run_algorithm2(p.simulate, p.prior, None, None, cfg).posterior
    assert np.array_equal(a.components[0].mean, b.components[0].mean)
    assert np.array_equal(a.components[0].prec_chol, b.components[0].prec_chol)


def test_replication_continuity():
    p = LinearGaussianProblem()
    rng = np.random.default_rng(4)
    data = simulate_dataset(p.simulate, p.prior, 5000, rng, None, "prior")
    net = train_mdn(init_mdn(1, 1, 1, (20,), rng), data, TrainConfig(n_epochs=100))
    loss = -mdn_logprob_batch(net, data.theta, data.x).mean()
    rep = replicate_components(net, 4, rng, InferenceConfig(x_o=[0.0]).replicate_noise)
    rep_loss = -mdn_logprob_batch(rep, data.theta, data.x).mean()
    assert abs(rep_loss - loss) <= 0.01 * abs(loss)
