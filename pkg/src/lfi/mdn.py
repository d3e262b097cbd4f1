"""Mixture density network with full-covariance Gaussian components.

The network is a tanh MLP whose final linear layer emits, in order,

    [alpha logits (K) | for each k: mean (D), log diag U_k (D), strict upper U_k (T)]

with ``T = D (D - 1) / 2``. ``U_k`` is the upper Cholesky factor of the
precision of component ``k``. Gradients are hand-written reverse mode.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Tuple

import numpy as np
from scipy.special import logsumexp

from .data import as_arrays
from .errors import TrainingDiverged
from .gmath import LOG_2PI, Gaussian, GaussianMixture

__all__ = [
    "MdnNet",
    "TrainConfig",
    "AdamState",
    "init_mdn",
    "mdn_forward",
    "mdn_logprob",
    "mdn_logprob_batch",
    "mdn_grad",
    "adam_step",
    "train_mdn",
    "replicate_components",
    "save_mdn",
    "load_mdn",
]


# --------------------------------------------------------------------------
# mixture head


class HeadLayout:
    """Index bookkeeping for the flat output vector of an MDN."""

    def __init__(self, theta_dim: int, n_components: int):
        self.D = theta_dim
        self.K = n_components
        self.T = theta_dim * (theta_dim - 1) // 2
        self.block = 2 * self.D + self.T
        self.size = self.K + self.K * self.block
        self.diag = np.diag_indices(self.D)
        self.iu = np.triu_indices(self.D, 1)

    def split(self, out):
        n = out.shape[0]
        logits = out[:, : self.K]
        rest = out[:, self.K :].reshape(n, self.K, self.block)
        D = self.D
        return logits, rest[..., :D], rest[..., D : 2 * D], rest[..., 2 * D :]

    def assemble_u(self, logdiag, utri):
        n = logdiag.shape[0]
        u = np.zeros((n, self.K, self.D, self.D))
        u[..., self.diag[0], self.diag[1]] = np.exp(logdiag)
        u[..., self.iu[0], self.iu[1]] = utri
        return u

    def head_names(self):
        """(name, row slice) pairs of the output layer in serialization order."""
        names = [("alpha", slice(0, self.K))]
        D = self.D
        for k in range(self.K):
            start = self.K + k * self.block
            names.append((f"mean_{k}", slice(start, start + D)))
            names.append((f"diagU_{k}", slice(start + D, start + 2 * D)))
            names.append((f"utriU_{k}", slice(start + 2 * D, start + self.block)))
        return names


def mixture_head_forward(layout: HeadLayout, out, theta):
    """Per-example log density of ``theta`` under the mixture encoded by ``out``.

    Returns ``(logq, cache)``; ``cache`` feeds :func:`mixture_head_backward`.
    """
    logits, m, logdiag, utri = layout.split(out)
    u = layout.assemble_u(logdiag, utri)
    delta = theta[:, None, :] - m
    z = np.einsum("nkij,nkj->nki", u, delta)
    log_norm = -0.5 * layout.D * LOG_2PI + logdiag.sum(-1) - 0.5 * np.sum(z * z, axis=-1)
    log_alpha = logits - logsumexp(logits, axis=1, keepdims=True)
    joint = log_alpha + log_norm
    logq = logsumexp(joint, axis=1)
    cache = (u, delta, z, logdiag, np.exp(log_alpha), np.exp(joint - logq[:, None]))
    return logq, cache


def mixture_head_backward(layout: HeadLayout, cache, dlogq):
    """Gradient w.r.t. the flat output given the gradient w.r.t. each ``logq``."""
    u, delta, z, logdiag, alpha, resp = cache
    g = dlogq[:, None]
    dlog_norm = resp * g
    dlogits = dlog_norm - alpha * g
    dz = -dlog_norm[..., None] * z
    du = dz[..., :, None] * delta[..., None, :]
    dm = -np.einsum("nkij,nki->nkj", u, dz)
    dlogdiag = dlog_norm[..., None] + du[..., layout.diag[0], layout.diag[1]] * np.exp(logdiag)
    dutri = du[..., layout.iu[0], layout.iu[1]]
    n = dlogq.shape[0]
    rest = np.concatenate([dm, dlogdiag, dutri], axis=-1).reshape(n, -1)
    return np.concatenate([dlogits, rest], axis=1)


def mixture_from_output(layout: HeadLayout, out_row) -> GaussianMixture:
    logits, m, logdiag, utri = layout.split(out_row[None, :])
    u = layout.assemble_u(logdiag, utri)[0]
    alpha = np.exp(logits[0] - logsumexp(logits[0]))
    alpha /= alpha.sum()
    comps = tuple(Gaussian(m[0, k], u[k]) for k in range(layout.K))
    return GaussianMixture(alpha, comps)


# --------------------------------------------------------------------------
# network


@dataclass(frozen=True, eq=False)
class MdnNet:
    """Feedforward tanh MDN.

    ``params`` alternates weight matrices ``(out, in)`` and bias vectors:
    ``[W_1, b_1, ..., W_L, b_L, W_out, b_out]``.
    """

    x_dim: int
    theta_dim: int
    n_components: int
    hidden: Tuple[int, ...]
    params: Tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        params = tuple(np.array(p, dtype=np.float64) for p in self.params)
        shapes = layer_shapes(self.x_dim, self.theta_dim, self.n_components, self.hidden)
        if [p.shape for p in params] != shapes:
            raise ValueError(f"parameter shapes {[p.shape for p in params]} != {shapes}")
        for p in params:
            p.setflags(write=False)
        object.__setattr__(self, "params", params)

    @property
    def layout(self) -> HeadLayout:
        return HeadLayout(self.theta_dim, self.n_components)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def with_params(self, params) -> "MdnNet":
        return replace(self, params=tuple(params))

    def dims(self) -> dict:
        return dict(
            x_dim=self.x_dim,
            theta_dim=self.theta_dim,
            n_components=self.n_components,
            hidden=list(self.hidden),
        )


def layer_shapes(x_dim, theta_dim, n_components, hidden):
    sizes = [x_dim, *hidden, HeadLayout(theta_dim, n_components).size]
    shapes = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        shapes += [(fan_out, fan_in), (fan_out,)]
    return shapes


def init_mdn(x_dim, theta_dim, n_components, hidden, rng: np.random.Generator) -> MdnNet:
    """Weights iid N(0, 1/fan_in), biases zero (so every U_k starts at I)."""
    params = []
    for shape in layer_shapes(x_dim, theta_dim, n_components, hidden):
        if len(shape) == 2:
            params.append(rng.standard_normal(shape) / np.sqrt(shape[1]))
        else:
            params.append(np.zeros(shape))
    return MdnNet(x_dim, theta_dim, n_components, tuple(hidden), tuple(params))


def _mlp_forward(params, x):
    acts = [x]
    h = x
    n_layers = len(params) // 2
    for i in range(n_layers):
        a = h @ params[2 * i].T + params[2 * i + 1]
        h = np.tanh(a) if i < n_layers - 1 else a
        acts.append(h)
    return acts


def _mlp_backward(params, acts, dout):
    grads = [None] * len(params)
    n_layers = len(params) // 2
    da = dout
    for i in reversed(range(n_layers)):
        grads[2 * i] = da.T @ acts[i]
        grads[2 * i + 1] = da.sum(axis=0)
        if i > 0:
            dh = da @ params[2 * i]
            da = dh * (1.0 - acts[i] ** 2)
    return grads


def _check_x(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.x_dim:
        raise ValueError(f"expected x of dimension {net.x_dim}, got {x.shape[-1]}")
    return x


def mdn_forward(net: MdnNet, x) -> GaussianMixture:
    """Mixture q(theta | x) for a single input vector."""
    x = _check_x(net, np.atleast_1d(x))
    out = _mlp_forward(net.params, x[None, :])[-1]
    return mixture_from_output(net.layout, out[0])


def mdn_logprob_batch(net: MdnNet, theta, x) -> np.ndarray:
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    x = np.atleast_2d(_check_x(net, x))
    out = _mlp_forward(net.params, x)[-1]
    logq, _ = mixture_head_forward(net.layout, out, theta)
    return logq


def mdn_logprob(net: MdnNet, theta, x) -> float:
    """log q(theta | x) for one pair."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if theta.shape[-1] != net.theta_dim:
        raise ValueError(f"expected theta of dimension {net.theta_dim}")
    return float(mdn_logprob_batch(net, theta[None, :], np.atleast_1d(x)[None, :])[0])


def mdn_grad(net: MdnNet, batch) -> Tuple[float, List[np.ndarray]]:
    """Mean log probability over ``batch`` and its gradient w.r.t. every parameter.

    ``batch`` is a SimDataset, a ``(theta, x)`` pair of 2-d arrays, or a list
    of ``(theta, x)`` pairs.
    """
    theta, x = as_arrays(batch)
    if theta.shape[0] == 0:
        raise ValueError("empty batch")
    return _loglik_grad(net.params, net.layout, theta, x)


def _loglik_grad(params, layout, theta, x):
    n = theta.shape[0]
    acts = _mlp_forward(params, x)
    logq, cache = mixture_head_forward(layout, acts[-1], theta)
    dout = mixture_head_backward(layout, cache, np.full(n, 1.0 / n))
    return float(logq.mean()), _mlp_backward(params, acts, dout)


# --------------------------------------------------------------------------
# optimization


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params, grad, learning_rate: float = 1e-3):
    """One Adam step *descending* ``grad`` (pass the gradient of a loss).

    Returns the new parameter list and the new state; inputs are not mutated.
    """
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_p = [], [], []
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grad, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        new_p.append(p - learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t, b1, b2, state.eps)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    minibatch_size: int = 100
    n_epochs: int = 1000
    rng_seed: int = 0
    holdout_fraction: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.minibatch_size < 1 or self.n_epochs < 0:
            raise ValueError("minibatch_size must be >= 1 and n_epochs >= 0")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in [0, 1)")


def minibatches(rng, n, size):
    perm = rng.permutation(n)
    for start in range(0, n, size):
        yield perm[start : start + size]


def train_mdn(net: MdnNet, data, cfg: TrainConfig = TrainConfig(), return_trace: bool = False):
    """Maximum-likelihood training with minibatch Adam.

    Returns the trained net, or ``(net, trace)`` where ``trace`` holds the
    mean minibatch log-likelihood per epoch (and per-epoch holdout
    log-likelihood under key ``"holdout"`` when ``holdout_fraction > 0``).
    """
    theta, x = as_arrays(data)
    if theta.shape[0] == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.rng_seed)
    n_hold = int(round(cfg.holdout_fraction * theta.shape[0]))
    theta_val, x_val = theta[:n_hold], x[:n_hold]
    theta, x = theta[n_hold:], x[n_hold:]
    params = list(net.params)
    layout = net.layout
    state = AdamState.zeros_like(params)
    trace = {"train": [], "holdout": []}
    for epoch in range(cfg.n_epochs):
        total = 0.0
        for idx in minibatches(rng, theta.shape[0], cfg.minibatch_size):
            value, grad = _loglik_grad(params, layout, theta[idx], x[idx])
            if not np.isfinite(value):
                raise TrainingDiverged(epoch)
            params, state = adam_step(state, params, [-g for g in grad], cfg.learning_rate)
            total += value * idx.size
        trace["train"].append(total / theta.shape[0])
        if n_hold:
            trace["holdout"].append(float(mdn_logprob_batch(net.with_params(params), theta_val, x_val).mean()))
    out = net.with_params(params)
    return (out, trace) if return_trace else out


# --------------------------------------------------------------------------
# component replication


def replicate_output_layer(layout: HeadLayout, w, b, n_new, rng, noise_scale, alpha_noise=True):
    """Copy the single-component rows of an output layer ``n_new`` times."""
    if layout.K != 1:
        raise ValueError("replication needs a single-component network")
    new = HeadLayout(layout.D, n_new)
    comp_w, comp_b = w[1:], b[1:]
    w_new = np.zeros((new.size, w.shape[1]))
    b_new = np.zeros(new.size)
    w_new[n_new:] = np.tile(comp_w, (n_new, 1))
    b_new[n_new:] = np.tile(comp_b, n_new)
    if noise_scale > 0:
        w_new[n_new:] += noise_scale * rng.standard_normal(w_new[n_new:].shape)
        b_new[n_new:] += noise_scale * rng.standard_normal(b_new[n_new:].shape)
        if alpha_noise:
            w_new[:n_new] = noise_scale * rng.standard_normal(w_new[:n_new].shape)
            b_new[:n_new] = noise_scale * rng.standard_normal(n_new)
    return new, w_new, b_new


def replicate_components(net: MdnNet, n_new: int, rng: np.random.Generator, noise_scale: float = 1e-3) -> MdnNet:
    """Turn a one-component net into an ``n_new``-component net.

    Every component head is a noisy copy of the original; the mixing head
    starts at zero plus noise, i.e. near-uniform weights. Hidden layers are
    copied unchanged.
    """
    _, w, b = replicate_output_layer(net.layout, net.params[-2], net.params[-1], n_new, rng, noise_scale)
    return MdnNet(net.x_dim, net.theta_dim, n_new, net.hidden, net.params[:-2] + (w, b))


# --------------------------------------------------------------------------
# persistence


def flat_blocks(layout: HeadLayout, params):
    """Parameter arrays in file order: hidden (W, b)..., then each head's (W, b)."""
    blocks = list(params[:-2])
    w_out, b_out = params[-2], params[-1]
    for _, rows in layout.head_names():
        blocks += [w_out[rows], b_out[rows]]
    return blocks


def unflat_blocks(dims, values):
    shapes = layer_shapes(dims["x_dim"], dims["theta_dim"], dims["n_components"], dims["hidden"])
    layout = HeadLayout(dims["theta_dim"], dims["n_components"])
    values = np.asarray(values, dtype=np.float64)
    pos = 0
    params = []
    for shape in shapes[:-2]:
        size = int(np.prod(shape))
        params.append(values[pos : pos + size].reshape(shape))
        pos += size
    w_out = np.zeros(shapes[-2])
    b_out = np.zeros(shapes[-1])
    for _, rows in layout.head_names():
        nrows = rows.stop - rows.start
        size = nrows * w_out.shape[1]
        w_out[rows] = values[pos : pos + size].reshape(nrows, w_out.shape[1])
        pos += size
        b_out[rows] = values[pos : pos + nrows]
        pos += nrows
    if pos != values.size:
        raise ValueError(f"parameter file has {values.size} values, expected {pos}")
    return params + [w_out, b_out], pos


def _header(kind, dims, extra=""):
    hidden = ",".join(str(h) for h in dims["hidden"]) or "-"
    return (
        f"{kind} x_dim={dims['x_dim']} theta_dim={dims['theta_dim']} "
        f"n_components={dims['n_components']} hidden={hidden}{extra}"
    )


def parse_header(line):
    fields = line.lstrip("#").split()
    kind = fields[0]
    kv = dict(f.split("=", 1) for f in fields[1:])
    dims = dict(
        x_dim=int(kv.pop("x_dim")),
        theta_dim=int(kv.pop("theta_dim")),
        n_components=int(kv.pop("n_components")),
        hidden=[] if kv["hidden"] == "-" else [int(h) for h in kv["hidden"].split(",")],
    )
    kv.pop("hidden")
    return kind, dims, kv


def save_mdn(net: MdnNet, path) -> None:
    """Write a text parameter file: one header line, then one value per line."""
    values = np.concatenate([blk.ravel() for blk in flat_blocks(net.layout, net.params)])
    np.savetxt(path, values, fmt="%.17g", header=_header("mdn", net.dims()))


def load_mdn(path) -> MdnNet:
    with open(path) as fh:
        kind, dims, _ = parse_header(fh.readline())
    if kind != "mdn":
        raise ValueError(f"{path} holds a {kind!r} network, not 'mdn'")
    values = np.atleast_1d(np.loadtxt(path))
    params, _ = unflat_blocks(dims, values)
    return MdnNet(dims["x_dim"], dims["theta_dim"], dims["n_components"], tuple(dims["hidden"]), tuple(params))
