"""Oracle self-checks: gradients, mixture division, effective sample sizes, Gillespie counts.

Each check returns a :class:`CheckResult`; :func:`run_all` runs them in order.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..abc import ess_mcmc, ess_weighted
from ..gmath import Gaussian, GaussianMixture, divide_mixture_by_gaussian
from ..mdn import init_mdn, mdn_grad, mdn_logprob_batch
from ..simulators.gillespie import gillespie
from ..svi import svi_from_mdn, svi_objective_grad

FD_STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.3g} (bar {self.threshold:g}, {self.seconds:.1f}s)"


# guards 0/0 only; the comparison is purely relative
GRAD_FLOOR = 1e-300


def rel_error(analytic, numeric, floor: float = GRAD_FLOOR) -> float:
    """Largest coordinatewise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.concatenate([np.ravel(g) for g in analytic])
    n = np.concatenate([np.ravel(g) for g in numeric])
    scale = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / scale))


def central_difference(f, arrays, step=FD_STEP):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arrays`` (perturbed in place)."""
    out = []
    for arr in arrays:
        g = np.empty_like(arr)
        for idx in np.ndindex(arr.shape):
            orig = arr[idx]
            arr[idx] = orig + step
            fp = f()
            arr[idx] = orig - step
            fm = f()
            arr[idx] = orig
            g[idx] = (fp - fm) / (2 * step)
        out.append(g)
    return out


def random_architecture(rng):
    n_layers = int(rng.integers(1, 3))
    return dict(
        x_dim=int(rng.integers(1, 4)),
        theta_dim=int(rng.integers(1, 4)),
        n_components=int(rng.integers(1, 4)),
        hidden=tuple(int(h) for h in rng.integers(2, 6, size=n_layers)),
    )


def _batch(rng, arch, n=6):
    return rng.standard_normal((n, arch["theta_dim"])), rng.standard_normal((n, arch["x_dim"]))


def check_gradients(n_architectures: int = 10, seed: int = 0, tol: float = 1e-4) -> CheckResult:
    """MDN and fixed-noise MDN-SVI gradients against central differences."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_mdn = worst_svi = 0.0
    for i in range(n_architectures):
        arch = random_architecture(rng)
        net = init_mdn(arch["x_dim"], arch["theta_dim"], arch["n_components"], arch["hidden"], rng)
        theta, x = _batch(rng, arch)
        _, grad = mdn_grad(net, (theta, x))
        params = [p.copy() for p in net.params]
        num = central_difference(lambda: float(mdn_logprob_batch(net.with_params(params), theta, x).mean()), params)
        worst_mdn = max(worst_mdn, rel_error(grad, num))

        svi = svi_from_mdn(net, log_var=-3.0)
        noise_seed = 1000 + i
        _, (gm, gs) = svi_objective_grad(svi, (theta, x), 50, np.random.default_rng(noise_seed))
        phi_m = [p.copy() for p in svi.phi_m]
        phi_s = [s.copy() for s in svi.phi_s]
        num = central_difference(
            lambda: svi_objective_grad(
                svi.with_params(phi_m, phi_s), (theta, x), 50, np.random.default_rng(noise_seed)
            )[0],
            phi_m + phi_s,
        )
        worst_svi = max(worst_svi, rel_error(gm + gs, num))
    worst = max(worst_mdn, worst_svi)
    return CheckResult("gradient fidelity", worst <= tol, worst, tol, time.perf_counter() - t0,
                       dict(mdn=worst_mdn, svi=worst_svi))


def _random_spd(rng, dim, lo, hi):
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return q @ np.diag(rng.uniform(lo, hi, dim)) @ q.T


def random_division_case(rng, dim):
    """A mixture and a Gaussian whose precision stays below every component precision."""
    K = int(rng.integers(1, 4))
    comps = tuple(
        Gaussian.from_covariance(rng.uniform(-2, 2, dim), _random_spd(rng, dim, 0.3**2, 1.5**2)) for _ in range(K)
    )
    q = GaussianMixture(rng.dirichlet(np.ones(K)), comps)
    floor = min(np.linalg.eigvalsh(c.precision).min() for c in comps)
    p0 = Gaussian.from_precision(rng.uniform(-2, 2, dim), _random_spd(rng, dim, 0.05 * floor, 0.5 * floor))
    return q, p0


def division_grid_error(q, p0) -> float:
    """Max density error between the analytic quotient and a normalized grid ratio."""
    dim = q.dim
    if dim == 1:
        axis = np.linspace(-25, 25, 10001)
        pts = axis[:, None]
        cell = axis[1] - axis[0]
    else:
        axis = np.linspace(-25, 25, 1001)
        g1, g2 = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([g1.ravel(), g2.ravel()])
        cell = (axis[1] - axis[0]) ** 2
    log_ratio = q.logpdf(pts) - p0.logpdf(pts)
    ratio = np.exp(log_ratio - log_ratio.max())
    oracle = ratio / (ratio.sum() * cell)
    analytic = divide_mixture_by_gaussian(q, p0).pdf(pts)
    return float(np.max(np.abs(oracle - analytic)))


def check_division(n_cases: int = 20, seed: int = 0, tol: float = 1e-6) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    errors = [division_grid_error(*random_division_case(rng, 1 + i % 2)) for i in range(n_cases)]
    worst = max(errors)
    return CheckResult("division vs grid", worst <= tol, worst, tol, time.perf_counter() - t0)


def check_ess(seed: int = 0, n: int = 10_000, tol: float = 0.15) -> CheckResult:
    t0 = time.perf_counter()
    uniform = ess_weighted(np.full(1000, 1.0 / 1000)) == 1000.0
    onehot = ess_weighted(np.eye(1000)[3]) == 1.0
    chain = np.random.default_rng(seed).standard_normal((n, 2))
    err = abs(ess_mcmc(chain) - n) / n
    return CheckResult("ESS units", bool(uniform and onehot and err <= tol), err, tol, time.perf_counter() - t0,
                       dict(uniform_exact=uniform, onehot_exact=onehot))


def poisson_counts(rate_time: float = 100.0, n_runs: int = 10_000, seed: int = 0) -> np.ndarray:
    """Event counts over unit time of one reaction with rate ``rate_time`` that leaves the state frozen."""
    rng = np.random.default_rng(seed)
    grid = np.array([0.0, 1.0])
    orders = np.zeros((1, 1), dtype=np.int64)
    changes = np.zeros((1, 1), dtype=np.int64)
    return np.array([gillespie([1], [rate_time], orders, changes, grid, rng)[1] for _ in range(n_runs)])


def check_gillespie(rate_time: float = 100.0, n_runs: int = 10_000, seed: int = 0, tol: float = 0.05) -> CheckResult:
    t0 = time.perf_counter()
    counts = poisson_counts(rate_time, n_runs, seed)
    err = max(abs(counts.mean() - rate_time), abs(counts.var() - rate_time)) / rate_time
    return CheckResult("Gillespie Poisson counts", err <= tol, err, tol, time.perf_counter() - t0,
                       dict(mean=float(counts.mean()), var=float(counts.var())))


CHECKS = {
    "gradients": check_gradients,
    "division": check_division,
    "ess": check_ess,
    "gillespie": check_gillespie,
}


def run_all(seed: int = 0, names=None):
    return [CHECKS[name](seed=seed) for name in (names or CHECKS)]
