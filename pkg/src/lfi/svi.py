"""Bayesian MDN trained by stochastic variational inference.

Every weight and bias carries an independent Gaussian posterior with mean in
``phi_m`` and log variance in ``phi_s``; the prior is N(0, 1/lam). Training
noise is injected per unit with the local reparameterization trick: for a unit
``a = w.z + b`` the activation is drawn directly from

    N(w_m.z + b_m,  exp(w_s).(z*z) + exp(b_s)).

At prediction time the noise is off and the net is a plain MDN with
parameters ``phi_m``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from .data import as_arrays
from .errors import TrainingDiverged
from .gmath import GaussianMixture
from .mdn import (
    AdamState,
    HeadLayout,
    MdnNet,
    TrainConfig,
    _header,
    adam_step,
    flat_blocks,
    layer_shapes,
    mdn_forward,
    minibatches,
    mixture_from_output,
    mixture_head_backward,
    mixture_head_forward,
    parse_header,
    replicate_output_layer,
    unflat_blocks,
)

__all__ = [
    "SviNet",
    "svi_init",
    "svi_from_mdn",
    "svi_as_mdn",
    "svi_forward_train",
    "svi_forward_predict",
    "svi_kl_term",
    "svi_objective_grad",
    "train_mdn_svi",
    "replicate_svi_components",
    "save_svi",
    "load_svi",
]

DEFAULT_LAMBDA = 0.01


@dataclass(frozen=True, eq=False)
class SviNet:
    x_dim: int
    theta_dim: int
    n_components: int
    hidden: Tuple[int, ...]
    phi_m: Tuple[np.ndarray, ...]
    phi_s: Tuple[np.ndarray, ...]
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("prior precision lam must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        shapes = layer_shapes(self.x_dim, self.theta_dim, self.n_components, self.hidden)
        for name in ("phi_m", "phi_s"):
            arrs = tuple(np.array(p, dtype=np.float64) for p in getattr(self, name))
            if [a.shape for a in arrs] != shapes:
                raise ValueError(f"{name} shapes {[a.shape for a in arrs]} != {shapes}")
            for a in arrs:
                a.setflags(write=False)
            object.__setattr__(self, name, arrs)

    @property
    def layout(self) -> HeadLayout:
        return HeadLayout(self.theta_dim, self.n_components)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.phi_m)

    def with_params(self, phi_m, phi_s) -> "SviNet":
        return replace(self, phi_m=tuple(phi_m), phi_s=tuple(phi_s))

    def dims(self) -> dict:
        return dict(
            x_dim=self.x_dim,
            theta_dim=self.theta_dim,
            n_components=self.n_components,
            hidden=list(self.hidden),
        )


def svi_init(x_dim, theta_dim, n_components, hidden, lam: float = DEFAULT_LAMBDA) -> SviNet:
    """Variational posterior equal to the prior: means 0, log variances log(1/lam)."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    shapes = layer_shapes(x_dim, theta_dim, n_components, hidden)
    phi_m = tuple(np.zeros(s) for s in shapes)
    phi_s = tuple(np.full(s, np.log(1.0 / lam)) for s in shapes)
    return SviNet(x_dim, theta_dim, n_components, tuple(hidden), phi_m, phi_s, lam)


def svi_from_mdn(net: MdnNet, log_var: float, lam: float = DEFAULT_LAMBDA) -> SviNet:
    """Variational net centred on a conventional net's weights with a shared log variance."""
    phi_s = tuple(np.full(p.shape, float(log_var)) for p in net.params)
    return SviNet(net.x_dim, net.theta_dim, net.n_components, net.hidden, net.params, phi_s, lam)


def svi_as_mdn(net: SviNet) -> MdnNet:
    return MdnNet(net.x_dim, net.theta_dim, net.n_components, net.hidden, net.phi_m)


def _noisy_forward(phi_m, phi_s, x, rng):
    """Forward pass with one local-reparameterization draw per unit per example."""
    n_layers = len(phi_m) // 2
    acts = [x]
    cache = []
    h = x
    for i in range(n_layers):
        wm, bm = phi_m[2 * i], phi_m[2 * i + 1]
        ws, bs = np.exp(phi_s[2 * i]), np.exp(phi_s[2 * i + 1])
        a_mean = h @ wm.T + bm
        a_var = (h * h) @ ws.T + bs
        u = rng.standard_normal(a_mean.shape)
        a_std = np.sqrt(a_var)
        a = a_mean + a_std * u
        cache.append((u, a_std, ws, bs))
        h = np.tanh(a) if i < n_layers - 1 else a
        acts.append(h)
    return acts, cache


def _noisy_backward(phi_m, acts, cache, dout):
    n_layers = len(phi_m) // 2
    gm = [None] * len(phi_m)
    gs = [None] * len(phi_m)
    da = dout
    for i in reversed(range(n_layers)):
        z = acts[i]
        u, a_std, ws, bs = cache[i]
        gm[2 * i] = da.T @ z
        gm[2 * i + 1] = da.sum(axis=0)
        dvar = da * u / (2.0 * a_std)
        gs[2 * i] = (dvar.T @ (z * z)) * ws
        gs[2 * i + 1] = dvar.sum(axis=0) * bs
        if i > 0:
            dz = da @ phi_m[2 * i] + 2.0 * z * (dvar @ ws)
            da = dz * (1.0 - acts[i] ** 2)
    return gm, gs


def svi_forward_train(net: SviNet, x, rng: np.random.Generator) -> GaussianMixture:
    """One noisy evaluation of q(theta | x) (training-mode forward)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    acts, _ = _noisy_forward(net.phi_m, net.phi_s, x[None, :], rng)
    return mixture_from_output(net.layout, acts[-1][0])


def svi_forward_predict(net: SviNet, x) -> GaussianMixture:
    return mdn_forward(svi_as_mdn(net), x)


def svi_kl_term(net: SviNet) -> float:
    """KL(q(phi) || p(phi)) up to its additive constant:
    lam/2 (|phi_m|^2 + sum exp(phi_s)) - sum(phi_s) / 2."""
    sq = sum(float(np.sum(p * p)) for p in net.phi_m)
    ev = sum(float(np.sum(np.exp(s))) for s in net.phi_s)
    ss = sum(float(np.sum(s)) for s in net.phi_s)
    return 0.5 * net.lam * (sq + ev) - 0.5 * ss


def svi_kl_grad(net: SviNet):
    gm = [net.lam * p for p in net.phi_m]
    gs = [0.5 * net.lam * np.exp(s) - 0.5 for s in net.phi_s]
    return gm, gs


def svi_loglik_grad(net: SviNet, batch, rng):
    """Noisy mean log-likelihood over ``batch`` and its gradients (phi_m, phi_s)."""
    theta, x = as_arrays(batch)
    if theta.shape[0] == 0:
        raise ValueError("empty batch")
    return _loglik_grad(net.phi_m, net.phi_s, net.layout, theta, x, rng)


def _loglik_grad(phi_m, phi_s, layout, theta, x, rng):
    n = theta.shape[0]
    acts, cache = _noisy_forward(phi_m, phi_s, x, rng)
    logq, head_cache = mixture_head_forward(layout, acts[-1], theta)
    dout = mixture_head_backward(layout, head_cache, np.full(n, 1.0 / n))
    gm, gs = _noisy_backward(phi_m, acts, cache, dout)
    return float(logq.mean()), gm, gs


def _objective_grad(phi_m, phi_s, lam, layout, theta, x, n_total, rng):
    value, gm, gs = _loglik_grad(phi_m, phi_s, layout, theta, x, rng)
    sq = ev = ss = 0.0
    for i, (m, s) in enumerate(zip(phi_m, phi_s)):
        es = np.exp(s)
        sq += float(np.sum(m * m))
        ev += float(np.sum(es))
        ss += float(np.sum(s))
        gm[i] = gm[i] - (lam / n_total) * m
        gs[i] = gs[i] - (0.5 * lam * es - 0.5) / n_total
    value -= (0.5 * lam * (sq + ev) - 0.5 * ss) / n_total
    return value, gm, gs


def svi_objective_grad(net: SviNet, batch, n_total: int, rng: np.random.Generator):
    """Stochastic lower bound ``mean log q - KL / n_total`` and its gradient.

    Returns ``(value, (grad_phi_m, grad_phi_s))``; the gradient is that of
    the bound itself (ascent direction).
    """
    theta, _ = as_arrays(batch)
    if n_total < theta.shape[0]:
        raise ValueError("n_total must be at least the batch size")
    value, gm, gs = svi_loglik_grad(net, batch, rng)
    km, ks = svi_kl_grad(net)
    value -= svi_kl_term(net) / n_total
    gm = [g - k / n_total for g, k in zip(gm, km)]
    gs = [g - k / n_total for g, k in zip(gs, ks)]
    return value, (gm, gs)


def train_mdn_svi(net: SviNet, data, cfg: TrainConfig = TrainConfig(), return_trace: bool = False):
    """Minibatch Adam on the negated lower bound using every training pair.

    The KL weight uses ``len(data)`` as the dataset size. Returns the trained
    net, or ``(net, trace)`` with the mean per-epoch bound estimate.
    """
    theta, x = as_arrays(data)
    n = theta.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.rng_seed)
    n_par = len(net.phi_m)
    params = list(net.phi_m) + list(net.phi_s)
    layout = net.layout
    state = AdamState.zeros_like(params)
    trace = []
    for epoch in range(cfg.n_epochs):
        total = 0.0
        for idx in minibatches(rng, n, cfg.minibatch_size):
            value, gm, gs = _objective_grad(
                params[:n_par], params[n_par:], net.lam, layout, theta[idx], x[idx], n, rng
            )
            if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in gm + gs):
                raise TrainingDiverged(epoch)
            params, state = adam_step(state, params, [-g for g in gm + gs], cfg.learning_rate)
            total += value * idx.size
        trace.append(total / n)
    out = net.with_params(params[:n_par], params[n_par:])
    return (out, trace) if return_trace else out


def replicate_svi_components(net: SviNet, n_new: int, rng: np.random.Generator, noise_scale: float = 1e-3) -> SviNet:
    """Replicate a one-component SviNet; means get noise, log variances are copied."""
    layout = net.layout
    _, wm, bm = replicate_output_layer(layout, net.phi_m[-2], net.phi_m[-1], n_new, rng, noise_scale)
    _, ws, bs = replicate_output_layer(layout, net.phi_s[-2], net.phi_s[-1], n_new, rng, 0.0)
    ws[:n_new] = net.phi_s[-2][0]
    bs[:n_new] = net.phi_s[-1][0]
    return SviNet(
        net.x_dim,
        net.theta_dim,
        n_new,
        net.hidden,
        net.phi_m[:-2] + (wm, bm),
        net.phi_s[:-2] + (ws, bs),
        net.lam,
    )


def save_svi(net: SviNet, path) -> None:
    """Text file: header (dims and lambda), then the phi_m block, then phi_s."""
    layout = net.layout
    values = np.concatenate(
        [b.ravel() for b in flat_blocks(layout, net.phi_m)]
        + [b.ravel() for b in flat_blocks(layout, net.phi_s)]
    )
    np.savetxt(path, values, fmt="%.17g", header=_header("mdn_svi", net.dims(), f" lambda={net.lam!r}"))


def load_svi(path) -> SviNet:
    with open(path) as fh:
        kind, dims, extra = parse_header(fh.readline())
    if kind != "mdn_svi":
        raise ValueError(f"{path} holds a {kind!r} network, not 'mdn_svi'")
    values = np.atleast_1d(np.loadtxt(path))
    phi_m, used = unflat_blocks(dims, values[: values.size // 2])
    phi_s, _ = unflat_blocks(dims, values[values.size // 2 :])
    return SviNet(
        dims["x_dim"], dims["theta_dim"], dims["n_components"], tuple(dims["hidden"]),
        tuple(phi_m), tuple(phi_s), float(extra["lambda"]),
    )
