"""Exact stochastic simulation (Gillespie's direct method) for mass-action networks.

A reaction ``j`` fires with propensity ``rates[j] * prod_s x_s ** orders[j, s]``
(orders are 0 or 1) and changes the state by ``changes[j]``. The jitted kernel
draws from numba's own generator, seeded per call from the caller's numpy
Generator, so results are reproducible.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..errors import SimulationExploded

__all__ = ["gillespie", "LV_ORDERS", "LV_CHANGES"]

# predator born, predator dies, prey born, prey eaten; species order (X, Y)
LV_ORDERS = np.array([[1, 1], [1, 0], [0, 1], [1, 1]], dtype=np.int64)
LV_CHANGES = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.int64)


@njit(cache=True)
def _ssa(state0, rates, orders, changes, t_grid, max_events, seed):
    np.random.seed(seed)
    n_rec = t_grid.shape[0]
    n_species = state0.shape[0]
    n_react = rates.shape[0]
    records = np.empty((n_rec, n_species), dtype=np.int64)
    state = state0.copy()
    props = np.empty(n_react)
    t = 0.0
    rec = 0
    n_events = 0
    while rec < n_rec and t_grid[rec] <= t:
        records[rec] = state
        rec += 1
    while rec < n_rec:
        total = 0.0
        for j in range(n_react):
            a = rates[j]
            for s in range(n_species):
                if orders[j, s] == 1:
                    a *= state[s]
            props[j] = a
            total += a
        if total <= 0.0:
            # absorbing state: the remaining recordings repeat it
            while rec < n_rec:
                records[rec] = state
                rec += 1
            break
        t_next = t + np.random.exponential(1.0 / total)
        while rec < n_rec and t_grid[rec] < t_next:
            records[rec] = state
            rec += 1
        if rec == n_rec:
            break
        if n_events >= max_events:
            return records, n_events, True
        u = np.random.random() * total
        j = 0
        acc = props[0]
        while acc < u and j < n_react - 1:
            j += 1
            acc += props[j]
        for s in range(n_species):
            state[s] += changes[j, s]
        n_events += 1
        t = t_next
    return records, n_events, False


def gillespie(state0, rates, orders, changes, t_grid, rng: np.random.Generator, max_events: int = 100_000):
    """Simulate a mass-action jump process and record it on ``t_grid``.

    Each record holds the state left by the last event strictly before the
    grid time.

    Returns
    -------
    records : ndarray of int64, shape (len(t_grid), n_species)
    n_events : int
        Number of reactions that fired up to the last grid time.

    Raises
    ------
    SimulationExploded
        If more than ``max_events`` reactions would be needed.
    """
    rates = np.asarray(rates, dtype=np.float64)
    if np.any(rates < 0) or not np.all(np.isfinite(rates)):
        raise ValueError("rates must be finite and non-negative")
    seed = int(rng.integers(0, 2**32 - 1))
    records, n_events, exploded = _ssa(
        np.asarray(state0, dtype=np.int64),
        rates,
        np.asarray(orders, dtype=np.int64),
        np.asarray(changes, dtype=np.int64),
        np.asarray(t_grid, dtype=np.float64),
        int(max_events),
        seed,
    )
    if exploded:
        raise SimulationExploded(f"more than {max_events} events")
    return records, int(n_events)
