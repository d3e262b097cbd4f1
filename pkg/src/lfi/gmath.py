"""Gaussian and Gaussian-mixture algebra.

Gaussians are stored through the upper-triangular Cholesky factor ``U`` of
their precision matrix, ``inv(S) = U.T @ U``. Densities, products and ratios
all consume precisions, so no covariance inversions are needed on the hot
paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import logsumexp

from .errors import DegenerateSample, EmFailure, NonPositiveDefinite

LOG_2PI = np.log(2.0 * np.pi)

__all__ = [
    "Gaussian",
    "GaussianMixture",
    "UniformBoxPrior",
    "gaussian_logpdf",
    "mixture_logpdf",
    "mixture_sample",
    "divide_mixture_by_gaussian",
    "multiply_mixture_by_gaussian",
    "kl_gaussian",
    "fit_gaussian_weighted",
    "fit_mixture_em",
]


def _readonly(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _upper_cholesky_of_inverse(cov):
    """Upper-triangular ``U`` with ``U.T @ U == inv(cov)``, without inverting ``cov``.

    Uses the reversed-order factorization ``cov = R @ R.T`` with ``R`` upper
    triangular; then ``U = inv(R)``.
    """
    rev = cov[::-1, ::-1]
    low = np.linalg.cholesky(rev)
    r = low[::-1, ::-1]
    eye = np.eye(cov.shape[0])
    return solve_triangular(r, eye, lower=False)


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Full-covariance Gaussian parameterized by mean and precision Cholesky factor."""

    mean: np.ndarray
    prec_chol: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        u = np.atleast_2d(np.asarray(self.prec_chol, dtype=np.float64))
        if mean.ndim != 1 or u.shape != (mean.size, mean.size):
            raise ValueError(
                f"prec_chol must be {mean.size}x{mean.size}, got {u.shape}"
            )
        if not np.all(np.diag(u) > 0):
            raise ValueError("prec_chol must have a strictly positive diagonal")
        if np.any(np.tril(u, -1) != 0):
            raise ValueError("prec_chol must be upper triangular")
        object.__setattr__(self, "mean", _readonly(mean))
        object.__setattr__(self, "prec_chol", _readonly(u))

    @classmethod
    def from_precision(cls, mean, precision) -> "Gaussian":
        precision = np.atleast_2d(np.asarray(precision, dtype=np.float64))
        precision = 0.5 * (precision + precision.T)
        return cls(mean, np.linalg.cholesky(precision).T)

    @classmethod
    def from_covariance(cls, mean, cov) -> "Gaussian":
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        cov = 0.5 * (cov + cov.T)
        return cls(mean, _upper_cholesky_of_inverse(cov))

    @classmethod
    def standard(cls, dim: int) -> "Gaussian":
        return cls(np.zeros(dim), np.eye(dim))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def precision(self) -> np.ndarray:
        return self.prec_chol.T @ self.prec_chol

    @property
    def covariance(self) -> np.ndarray:
        ui = self._prec_chol_inv()
        return ui @ ui.T

    @property
    def logdet_cov(self) -> float:
        return -2.0 * float(np.sum(np.log(np.diag(self.prec_chol))))

    def _prec_chol_inv(self):
        return solve_triangular(self.prec_chol, np.eye(self.dim), lower=False)

    def logpdf(self, theta):
        return gaussian_logpdf(self, theta)

    def pdf(self, theta):
        return np.exp(self.logpdf(theta))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        z = rng.standard_normal((n, self.dim))
        # U^{-1} z has covariance U^{-1} U^{-T} = S
        return self.mean + solve_triangular(self.prec_chol, z.T, lower=False).T

    def marginal(self, index: int) -> "Gaussian":
        var = self.covariance[index, index]
        return Gaussian([self.mean[index]], [[1.0 / np.sqrt(var)]])

    def __repr__(self):
        return f"Gaussian(mean={self.mean!r}, cov={self.covariance!r})"


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Weighted sum of Gaussians sharing one dimension."""

    weights: np.ndarray
    components: tuple

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        comps = tuple(self.components)
        if w.ndim != 1 or w.size != len(comps) or w.size == 0:
            raise ValueError("need one weight per component and at least one component")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must lie on the simplex, got {w}")
        dims = {c.dim for c in comps}
        if len(dims) != 1:
            raise ValueError(f"components disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "weights", _readonly(w))
        object.__setattr__(self, "components", comps)

    @classmethod
    def single(cls, g: Gaussian) -> "GaussianMixture":
        return cls([1.0], (g,))

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def n_components(self) -> int:
        return len(self.components)

    def logpdf(self, theta):
        return mixture_logpdf(self, theta)

    def pdf(self, theta):
        return np.exp(self.logpdf(theta))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return mixture_sample(self, rng, n)

    def marginal(self, index: int) -> "GaussianMixture":
        return GaussianMixture(self.weights, tuple(c.marginal(index) for c in self.components))

    def mean(self) -> np.ndarray:
        return sum(w * c.mean for w, c in zip(self.weights, self.components))

    def covariance(self) -> np.ndarray:
        mu = self.mean()
        out = np.zeros((self.dim, self.dim))
        for w, c in zip(self.weights, self.components):
            d = c.mean - mu
            out += w * (c.covariance + np.outer(d, d))
        return out


@dataclass(frozen=True, eq=False)
class UniformBoxPrior:
    """Uniform density on an axis-aligned box."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError("need lower < upper elementwise")
        object.__setattr__(self, "lower", _readonly(lo))
        object.__setattr__(self, "upper", _readonly(hi))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def log_volume(self) -> float:
        return float(np.sum(np.log(self.upper - self.lower)))

    def contains(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        return np.all((theta >= self.lower) & (theta <= self.upper), axis=-1)

    def logpdf(self, theta):
        inside = self.contains(theta)
        out = np.where(inside, -self.log_volume, -np.inf)
        return float(out) if out.ndim == 0 else out

    def pdf(self, theta):
        return np.exp(self.logpdf(theta))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.lower + (self.upper - self.lower) * rng.random((n, self.dim))

    def mean(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def covariance(self) -> np.ndarray:
        return np.diag((self.upper - self.lower) ** 2 / 12.0)


def _as_points(theta, dim):
    theta = np.asarray(theta, dtype=np.float64)
    single = theta.ndim <= 1
    pts = theta.reshape(1, -1) if single else theta
    if pts.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {pts.shape[-1]}")
    return pts, single


def gaussian_logpdf(g: Gaussian, theta):
    """Log density of ``g`` at ``theta`` (a point or an ``(n, D)`` array of points)."""
    pts, single = _as_points(theta, g.dim)
    z = (pts - g.mean) @ g.prec_chol.T
    out = (
        -0.5 * g.dim * LOG_2PI
        + np.sum(np.log(np.diag(g.prec_chol)))
        - 0.5 * np.sum(z * z, axis=1)
    )
    return float(out[0]) if single else out


def _component_logpdfs(m: GaussianMixture, pts):
    return np.stack([gaussian_logpdf(c, pts) for c in m.components], axis=1)


def mixture_logpdf(m: GaussianMixture, theta):
    pts, single = _as_points(theta, m.dim)
    with np.errstate(divide="ignore"):
        logw = np.log(m.weights)
    out = logsumexp(_component_logpdfs(m, pts) + logw, axis=1)
    return float(out[0]) if single else out


def mixture_sample(m: GaussianMixture, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` iid points; returns an ``(n, D)`` array."""
    if n < 0:
        raise ValueError("n must be non-negative")
    out = np.empty((n, m.dim))
    if n == 0:
        return out
    labels = rng.choice(m.n_components, size=n, p=m.weights)
    for k, comp in enumerate(m.components):
        idx = np.flatnonzero(labels == k)
        if idx.size:
            out[idx] = comp.sample(rng, idx.size)
    return out


def _combine(q: GaussianMixture, g: Gaussian, sign: float) -> GaussianMixture:
    # Each component becomes N_k * N_g^sign, renormalized; the weight picks up
    # the integral of that product. sign=-1 gives the ratio of the mixture by g.
    if q.dim != g.dim:
        raise ValueError(f"dimension mismatch: mixture {q.dim}, gaussian {g.dim}")
    p0 = g.precision
    eta0 = p0 @ g.mean
    quad0 = float(g.mean @ eta0)
    logdet0 = g.logdet_cov
    comps = []
    log_c = []
    for k, comp in enumerate(q.components):
        pk = comp.precision
        prec_new = pk + sign * p0
        prec_new = 0.5 * (prec_new + prec_new.T)
        try:
            low = np.linalg.cholesky(prec_new)
        except np.linalg.LinAlgError:
            raise NonPositiveDefinite(k) from None
        if not np.all(np.isfinite(low)):
            raise NonPositiveDefinite(k)
        eta = pk @ comp.mean + sign * eta0
        mean_new = np.linalg.solve(prec_new, eta)
        u_new = low.T
        logdet_new = -2.0 * np.sum(np.log(np.diag(u_new)))
        c = (
            comp.logdet_cov
            + sign * logdet0
            - logdet_new
            + comp.mean @ pk @ comp.mean
            + sign * quad0
            - mean_new @ prec_new @ mean_new
        )
        comps.append(Gaussian(mean_new, u_new))
        log_c.append(c)
    with np.errstate(divide="ignore"):
        logw = np.log(q.weights) - 0.5 * np.asarray(log_c)
    w = np.exp(logw - logsumexp(logw))
    w /= w.sum()
    return GaussianMixture(w, tuple(comps))


def divide_mixture_by_gaussian(q: GaussianMixture, p0: Gaussian) -> GaussianMixture:
    """Normalized ratio ``q(theta) / p0(theta)`` as a Gaussian mixture.

    Component ``k`` gets precision ``inv(S_k) - inv(S_0)``, mean
    ``S_k' (inv(S_k) m_k - inv(S_0) m_0)`` and weight proportional to
    ``alpha_k exp(-c_k / 2)`` with

        c_k = log|S_k| - log|S_0| - log|S_k'|
              + m_k' inv(S_k) m_k - m_0' inv(S_0) m_0 - m_k'' inv(S_k') m_k'

    Raises
    ------
    NonPositiveDefinite
        If some component is broader than ``p0`` along any direction.
    """
    return _combine(q, p0, -1.0)


def multiply_mixture_by_gaussian(q: GaussianMixture, g: Gaussian) -> GaussianMixture:
    """Normalized product ``q(theta) * g(theta)`` as a Gaussian mixture."""
    return _combine(q, g, 1.0)


def kl_gaussian(p: Gaussian, q: Gaussian) -> float:
    """KL(p || q) between two Gaussians of equal dimension."""
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    # tr(inv(S_q) S_p) = ||U_q inv(U_p)||_F^2
    a = solve_triangular(p.prec_chol.T, q.prec_chol.T, lower=True).T
    trace = float(np.sum(a * a))
    d = q.prec_chol @ (q.mean - p.mean)
    val = 0.5 * (trace + float(d @ d) - p.dim + q.logdet_cov - p.logdet_cov)
    return max(val, 0.0)


def fit_gaussian_weighted(samples, weights=None, floor: float = 1e-12) -> Gaussian:
    """Gaussian with the weighted mean and covariance of ``samples``.

    Covariances are normalized by the total weight (no Bessel correction).
    ``weights=None`` or all-equal weights use plain unweighted moments.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if weights is None:
        w = None
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative, one per sample, not all zero")
        if np.all(w == w[0]):
            w = None
    support = x if w is None else x[w > 0]
    if support.shape[0] < 2 or np.all(support == support[0]):
        raise DegenerateSample("all weight sits on a single point")
    if w is None:
        mean = x.mean(axis=0)
        d = x - mean
        cov = d.T @ d / n
    else:
        w = w / w.sum()
        mean = w @ x
        d = x - mean
        cov = (d * w[:, None]).T @ d
    idx = np.diag_indices_from(cov)
    cov[idx] = np.maximum(cov[idx], floor)
    try:
        return Gaussian.from_covariance(mean, cov)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DegenerateSample(f"covariance is not factorizable: {exc}") from None


def _em_mstep(x, resp, rng, global_cov):
    """M-step; returns the mixture and the indices of components that had to be reseeded."""
    n = x.shape[0]
    nk = resp.sum(axis=0)
    weights = nk / n
    comps, reseeded = [], []
    for k in range(resp.shape[1]):
        comp = None
        if nk[k] > 1e-10 * n:
            r = resp[:, k]
            mean = r @ x / nk[k]
            d = x - mean
            try:
                comp = Gaussian.from_covariance(mean, (d * r[:, None]).T @ d / nk[k])
            except (np.linalg.LinAlgError, ValueError):
                comp = None
        if comp is None:
            # empty or collapsed: restart it at a random data point with the global spread
            comp = Gaussian.from_covariance(x[rng.integers(n)], global_cov)
            weights[k] = 1.0 / resp.shape[1]
            reseeded.append(k)
        comps.append(comp)
    return GaussianMixture(weights / weights.sum(), tuple(comps)), reseeded


def _em_single(x, K, rng, max_iter, tol, max_reinit):
    n = x.shape[0]
    global_cov = np.atleast_2d(np.cov(x.T, bias=True))
    # random responsibilities anchored on K random data points; data-independent
    # responsibilities would start every component at the global mean
    centers = x[rng.choice(n, size=K, replace=False)]
    scale = Gaussian.from_covariance(np.zeros(x.shape[1]), global_cov).prec_chol
    d = ((x[:, None, :] - centers[None, :, :]) @ scale.T) ** 2
    logits = -0.5 * d.sum(axis=2) + np.log(rng.random((n, K)) + 1e-12)
    resp = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    reinits = 0
    history = []
    mixture = None
    for _ in range(max_iter):
        mixture, reseeded = _em_mstep(x, resp, rng, global_cov)
        if reseeded:
            reinits += 1
            if reinits > max_reinit:
                raise EmFailure(
                    f"components {reseeded} still empty after {max_reinit} reinitializations"
                )
            history = []
        logp = _component_logpdfs(mixture, x) + np.log(np.maximum(mixture.weights, 1e-300))
        total = logsumexp(logp, axis=1)
        resp = np.exp(logp - total[:, None])
        ll = float(total.mean())
        converged = bool(history) and ll - history[-1] < tol
        history.append(ll)
        if converged:
            break
    return mixture, history


def fit_mixture_em(
    samples,
    K: int,
    rng: np.random.Generator,
    n_restarts: int = 5,
    max_iter: int = 500,
    tol: float = 1e-6,
    max_reinit: int = 10,
    return_history: bool = False,
):
    """Maximum-likelihood Gaussian mixture by EM with random restarts.

    Each restart starts from random responsibilities and iterates until the
    mean log-likelihood gains less than ``tol`` or ``max_iter`` is reached.
    The restart with the best final log-likelihood wins; restarts that
    fail are skipped, and EmFailure is raised only if all of them fail.

    Returns
    -------
    GaussianMixture, or ``(GaussianMixture, histories)`` when
    ``return_history`` is set; ``histories`` holds the per-iteration mean
    log-likelihoods of every restart.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, dim = x.shape
    if n < K * (dim + 1):
        raise ValueError(f"need at least {K * (dim + 1)} samples for K={K}, D={dim}")
    best, best_ll, histories = None, -np.inf, []
    failure = None
    for _ in range(max(1, n_restarts)):
        try:
            mixture, history = _em_single(x, K, rng, max_iter, tol, max_reinit)
        except EmFailure as exc:
            failure = exc
            continue
        histories.append(history)
        if history[-1] > best_ll:
            best, best_ll = mixture, history[-1]
    if best is None:
        raise failure
    return (best, histories) if return_history else best
