import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import norm

from lfi.errors import PilotDegenerate, SimulationExploded
from lfi.gmath import Gaussian
from lfi.simulators import (
    BlrProblem,
    MogProblem,
    PilotMoments,
    PilotStats,
    blr_true_posterior,
    gillespie_lv,
    lv_summary,
    make_problem,
    mog_true_posterior,
    pilot_normalize,
    pilot_whiten,
    sim_blr,
    sim_mg1,
    sim_mog,
)
from lfi.simulators.lotka_volterra import THETA_TRUE, time_grid
from lfi.simulators.mg1 import from_queue_params, mg1_departures, sim_mg1_batch, to_queue_params

# mixture of Gaussians


def test_mog_zero_noise():
    rng = np.random.default_rng(0)
    for theta in (-3.0, 0.0, 7.5):
        assert sim_mog(theta, rng, sigma1=1e-12, sigma2=1e-12)[0] == pytest.approx(theta, abs=1e-10)


def test_mog_moments():
    rng = np.random.default_rng(1)
    x = np.array([sim_mog(0.0, rng)[0] for _ in range(100_000)])
    assert abs(x.mean()) < 0.01
    assert x.var() == pytest.approx(0.505, rel=0.03)


def test_mog_posterior_at_mode():
    f = mog_true_posterior(0.0)
    assert float(f(0.0)) == pytest.approx(0.5 * (norm.pdf(0) + norm.pdf(0, 0, 0.1)), rel=1e-12)
    assert float(f(0.0)) == pytest.approx(2.194, abs=1e-3)
    assert float(f(0.7)) == pytest.approx(float(f(-0.7)), rel=1e-14)


def test_mog_posterior_normalized_and_truncated():
    f = mog_true_posterior(0.0)
    total = integrate.quad(f, -10, 10, points=[0.0], limit=200, epsabs=1e-12)[0]
    assert total == pytest.approx(1.0, abs=1e-6)
    assert float(f(10.0001)) == 0.0 and float(f(-10.0001)) == 0.0


def test_mog_problem_constants():
    p = MogProblem()
    assert (p.theta_lower, p.theta_upper, p.alpha, p.sigma1, p.sigma2, p.x_o_value) == (-10, 10, 0.5, 1, 0.1, 0)
    with pytest.raises(ValueError):
        MogProblem(sigma1=0.1, sigma2=1.0)


# Bayesian linear regression


def test_blr_zero_noise():
    inputs = np.random.default_rng(2).standard_normal((10, 6))
    theta = np.arange(6.0)
    np.testing.assert_allclose(sim_blr(theta, inputs, 1e-12, np.random.default_rng(0)), inputs @ theta, atol=1e-9)


def test_blr_noise_only():
    inputs = np.random.default_rng(3).standard_normal((10, 6))
    rng = np.random.default_rng(4)
    x = np.array([sim_blr(np.zeros(6), inputs, 0.1, rng) for _ in range(20_000)])
    assert x.std() == pytest.approx(0.1, rel=0.03)
    cov = np.cov(x.T)
    # off-diagonal sample covariance has sd sigma^2 / sqrt(n)
    off = cov[~np.eye(10, dtype=bool)]
    assert np.max(np.abs(off)) < 5 * 0.01 / np.sqrt(20_000)


def test_blr_posterior_uninformative():
    inputs = np.random.default_rng(5).standard_normal((10, 6))
    post = blr_true_posterior(np.ones(10), inputs, 1e8, Gaussian.standard(6))
    np.testing.assert_allclose(post.mean, 0.0, atol=1e-12)
    np.testing.assert_allclose(post.covariance, np.eye(6), atol=1e-12)


def test_blr_posterior_single_observation():
    u = np.zeros((1, 6))
    u[0, 0] = 1.0
    post = blr_true_posterior([0.4], u, 1.0, Gaussian.standard(6))
    assert post.covariance[0, 0] == pytest.approx(0.5)
    assert post.mean[0] == pytest.approx(0.2)


def test_blr_posterior_grid_oracle():
    rng = np.random.default_rng(6)
    inputs = rng.standard_normal((3, 2))
    x_o = rng.standard_normal(3)
    sigma = 0.8
    post = blr_true_posterior(x_o, inputs, sigma, Gaussian.standard(2))
    axis = np.linspace(-6, 6, 601)
    a, b = np.meshgrid(axis, axis, indexing="ij")
    pts = np.column_stack([a.ravel(), b.ravel()])
    logp = -0.5 * np.sum(pts**2, axis=1) - 0.5 * np.sum((pts @ inputs.T - x_o) ** 2, axis=1) / sigma**2
    dens = np.exp(logp - logp.max())
    dens /= dens.sum() * (axis[1] - axis[0]) ** 2
    assert np.max(np.abs(dens - post.pdf(pts))) < 1e-5


def test_blr_problem_dimensions(tmp_path):
    p = make_problem("blr", 0, tmp_path)
    assert (p.theta_dim, p.x_dim) == (6, 10)
    back = BlrProblem.load(tmp_path)
    assert np.array_equal(back.inputs, p.inputs) and np.array_equal(back.x_o, p.x_o)


# Lotka-Volterra


def test_lv_grid():
    grid = time_grid()
    assert grid.size == 151 and grid[-1] == pytest.approx(30.0)


def test_lv_zero_rates():
    xs, ys = gillespie_lv(np.zeros(4), np.random.default_rng(0))
    assert np.all(xs == 50) and np.all(ys == 100)


def test_lv_pure_death():
    rng = np.random.default_rng(1)
    runs = [gillespie_lv(np.array([0.0, 0.5, 0.0, 0.0]), rng) for _ in range(1000)]
    x1 = np.mean([xs[5] for xs, _ in runs])  # t = 1.0
    assert x1 == pytest.approx(50 * np.exp(-0.5), rel=0.05)
    assert all(np.all(ys == 100) for _, ys in runs)
    assert all(np.all(np.diff(xs) <= 0) for xs, _ in runs)


def test_lv_true_parameters_oscillate():
    rng = np.random.default_rng(0)
    alive = 0
    for _ in range(200):
        try:
            xs, ys = gillespie_lv(THETA_TRUE, rng)
        except SimulationExploded:
            continue  # predators died out and prey grew without bound
        assert np.all(xs >= 0) and np.all(ys >= 0)
        alive += bool(np.all(xs > 0) and np.all(ys > 0))
    assert alive > 100


def test_lv_rejects_negative_rates():
    with pytest.raises(ValueError):
        gillespie_lv(np.array([0.1, -0.1, 0.1, 0.1]), np.random.default_rng(0))


def test_summary_constant_series():
    s = lv_summary(np.full(151, 7.0), np.full(151, 3.0))
    np.testing.assert_array_equal(s[:2], [7.0, 3.0])
    np.testing.assert_allclose(s[2:4], np.log(1e-12))
    np.testing.assert_array_equal(s[4:], 0.0)


def test_summary_identical_series():
    x = np.random.default_rng(3).poisson(20, 151).astype(float)
    s = lv_summary(x, x)
    assert s[8] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(s[4:6], s[6:8], rtol=1e-15)


def test_summary_alternating_series():
    x = np.tile([1.0, 3.0], 76)[:151]
    s = lv_summary(x, np.random.default_rng(4).standard_normal(151))
    d = x - x.mean()
    assert s[4] == pytest.approx(np.dot(d[:-1], d[1:]) / np.dot(d, d), rel=1e-12)
    assert s[4] == pytest.approx(-1.0, abs=2 / 151)


def test_pilot_normalize():
    rng = np.random.default_rng(5)
    raw = rng.normal(3.0, 2.0, size=(500, 9))
    pilot = PilotStats.from_samples(raw)
    np.testing.assert_array_equal(pilot_normalize(pilot.mean, pilot), 0.0)
    z = pilot_normalize(raw, pilot)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-10)
    bumped = raw[0].copy()
    bumped[2] *= 2
    delta = pilot_normalize(bumped, pilot) - pilot_normalize(raw[0], pilot)
    np.testing.assert_allclose(delta, np.eye(9)[2] * raw[0, 2] / pilot.std[2], atol=1e-12)


def test_pilot_normalize_degenerate():
    with pytest.raises(PilotDegenerate):
        pilot_normalize(np.zeros(9), PilotStats(np.zeros(9), np.r_[np.ones(8), 0.0]))


# M/G/1 queue


def test_mg1_saturated_server():
    out = sim_mg1(np.array([2.0, 2.0, 1e9]), np.random.default_rng(0))
    np.testing.assert_allclose(out, 2.0, rtol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.floats(0, 10), st.floats(1e-3, 1 / 3), st.integers(0, 2**31))
def test_mg1_percentiles_sorted(t1, gap, t3, seed):
    out = sim_mg1(np.array([t1, t1 + gap, t3]), np.random.default_rng(seed))
    assert out.shape == (5,) and np.all(np.isfinite(out))
    assert np.all(np.diff(out) >= 0)


def test_mg1_minimum_service():
    out = sim_mg1_batch(np.tile([1.0, 5.0, 0.2], (200, 1)), np.random.default_rng(1))
    assert np.all(out[:, 0] >= 1.0)


def test_mg1_departures_increase():
    dep = mg1_departures(np.tile([0.5, 2.0, 0.3], (50, 1)), np.random.default_rng(2))
    assert np.all(np.diff(dep, axis=1) > 0)


def test_mg1_rejects_bad_parameters():
    with pytest.raises(ValueError):
        sim_mg1(np.array([3.0, 2.0, 0.1]), np.random.default_rng(0))


def test_mg1_reparameterization_round_trip():
    theta = np.array([[1.0, 5.0, 0.2], [0.3, 0.4, 0.1]])
    np.testing.assert_allclose(to_queue_params(from_queue_params(theta)), theta, atol=1e-15)


def test_pilot_whiten():
    rng = np.random.default_rng(3)
    samples = rng.multivariate_normal(np.arange(5.0), np.diag([1, 2, 3, 4, 5]) + 0.5, size=2000)
    pilot = PilotMoments.from_samples(samples)
    w = pilot_whiten(samples, pilot)
    np.testing.assert_allclose(w.mean(axis=0), 0.0, atol=1e-8)
    np.testing.assert_allclose(np.cov(w.T, bias=True), np.eye(5), atol=1e-8)
    np.testing.assert_array_equal(pilot_whiten(pilot.mean, pilot), 0.0)
    low = np.linalg.cholesky(pilot.cov)
    np.testing.assert_allclose(w @ low.T + pilot.mean, samples, atol=1e-10)


def test_pilot_whiten_degenerate():
    with pytest.raises(PilotDegenerate):
        pilot_whiten(np.zeros(5), PilotMoments(np.zeros(5), np.zeros((5, 5))))


def test_mg1_problem_persistence(tmp_path):
    p = make_problem("mg1", 0, tmp_path, n_pilot=2000)
    q = make_problem("mg1", 0, tmp_path)
    assert np.array_equal(p.x_o, q.x_o)
    assert np.array_equal(p.pilot.cov, q.pilot.cov)
    np.testing.assert_allclose(p.theta_true, [1.0, 4.0, 0.2])
