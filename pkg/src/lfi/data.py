"""Simulated training sets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class SimDataset:
    """Ordered ``(theta_n, x_n)`` pairs, stored as two aligned 2-d arrays.

    ``proposal_used`` is a free-form tag naming the distribution the
    parameters were drawn from ("prior", "proposal", ...).
    """

    theta: np.ndarray
    x: np.ndarray
    proposal_used: str = "prior"
    n_simulations: int = field(default=-1)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        x = np.asarray(self.x, dtype=np.float64)
        if theta.ndim == 1:
            theta = theta[:, None]
        if x.ndim == 1:
            x = x[:, None]
        if theta.shape[0] != x.shape[0]:
            raise ValueError(f"{theta.shape[0]} parameters but {x.shape[0]} data vectors")
        theta.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "x", x)
        if self.n_simulations < 0:
            object.__setattr__(self, "n_simulations", theta.shape[0])

    def __len__(self):
        return self.theta.shape[0]

    @property
    def theta_dim(self) -> int:
        return self.theta.shape[1]

    @property
    def x_dim(self) -> int:
        return self.x.shape[1]

    @classmethod
    def from_pairs(cls, pairs, proposal_used="prior") -> "SimDataset":
        theta, x = zip(*pairs)
        return cls(np.array(theta, dtype=np.float64), np.array(x, dtype=np.float64), proposal_used)

    def pairs(self):
        return list(zip(self.theta, self.x))


def as_arrays(data):
    """Accept a SimDataset, a ``(theta, x)`` tuple of arrays, or a list of pairs."""
    if isinstance(data, SimDataset):
        return data.theta, data.x
    if isinstance(data, tuple) and len(data) == 2 and np.ndim(data[0]) == 2:
        return np.asarray(data[0], dtype=np.float64), np.asarray(data[1], dtype=np.float64)
    ds = SimDataset.from_pairs(list(data))
    return ds.theta, ds.x


def simulator_fns(simulator):
    """``(single, batch)`` callables of a simulator.

    ``simulator`` is either a function ``(theta, rng) -> x`` or an object with
    a ``simulate`` method and optionally ``simulate_batch`` (``batch`` is then
    ``None`` when absent).
    """
    single = simulator.simulate if hasattr(simulator, "simulate") else simulator
    return single, getattr(simulator, "simulate_batch", None)
