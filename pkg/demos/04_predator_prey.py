"""Stochastic predator-prey trajectories and their summary statistics.

Runs the Gillespie simulator at the reference rates, prints a coarse
trajectory, and shows the nine summaries before pilot normalisation.

    python demos/04_predator_prey.py
"""

import numpy as np

from lfi.errors import SimulationExploded
from lfi.simulators import gillespie_lv, lv_summary
from lfi.simulators.lotka_volterra import THETA_TRUE, time_grid

rng = np.random.default_rng(6)  # about half of all runs die out; this one keeps cycling
grid = time_grid()
for attempt in range(10):
    try:
        predators, prey = gillespie_lv(THETA_TRUE, rng)
        break
    except SimulationExploded:
        print(f"run {attempt}: predators died out and prey grew without bound, retrying")

print(" time   predators  prey")
for i in range(0, grid.size, 10):
    print(f"{grid[i]:5.1f}  {predators[i]:9.0f}  {prey[i]:5.0f}")

names = ["mean X", "mean Y", "log var X", "log var Y", "acf X 1", "acf X 2", "acf Y 1", "acf Y 2", "xcorr"]  # X predators, Y prey
for name, value in zip(names, lv_summary(predators, prey)):
    print(f"{name:>10s}: {value:8.3f}")
