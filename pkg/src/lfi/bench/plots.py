"""Tabular plot data (comma-separated text with one header row)."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

KINDS = ("metric_vs_eps", "metric_vs_nsims", "marginal")


def _metric_names(results):
    names = []
    for r in results:
        for k in r.metrics:
            if k not in ("ess", "sims_per_effective_sample") and k not in names:
                names.append(k)
    return names


def emit_plot_data(results, kind: str, path, param_index: int = 0, grid=None, n_grid: int = 401) -> Path:
    """Write a plot table for ``results`` to ``path`` and return the path.

    ``metric_vs_nsims`` uses total simulations for MDN runs and simulations
    per effective sample for ABC runs. ``metric_vs_eps`` lists ABC runs by
    tolerance. ``marginal`` writes the analytic marginal density of each
    posterior along ``param_index`` on ``grid`` (default spans the means
    plus or minus five standard deviations).
    """
    results = list(results)
    if not results:
        raise ValueError("no results to plot")
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    experiments = {r.config.experiment for r in results}
    if len(experiments) > 1:
        raise ValueError(f"results mix experiments {sorted(experiments)}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = _metric_names(results)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if kind == "metric_vs_nsims":
            w.writerow(["method", "run", "n_simulations", "cost", "ess"] + names)
            for r in results:
                ess = r.metrics.get("ess", "")
                w.writerow([r.config.method, r.config.run_name, r.n_simulations, repr(r.cost), ess]
                           + [r.metrics.get(k, "") for k in names])
        elif kind == "metric_vs_eps":
            w.writerow(["method", "run", "epsilon", "n_simulations", "cost"] + names)
            for r in sorted((r for r in results if r.is_abc), key=lambda r: (r.config.method, -r.epsilon)):
                w.writerow([r.config.method, r.config.run_name, repr(r.epsilon), r.n_simulations, repr(r.cost)]
                           + [r.metrics.get(k, "") for k in names])
        else:
            margs = [r.posterior.marginal(param_index) for r in results]
            if grid is None:
                lo = min(float(np.min([c.mean[0] - 5 * np.sqrt(c.covariance[0, 0]) for c in m.components])) for m in margs)
                hi = max(float(np.max([c.mean[0] + 5 * np.sqrt(c.covariance[0, 0]) for c in m.components])) for m in margs)
                grid = np.linspace(lo, hi, n_grid)
            grid = np.asarray(grid, dtype=np.float64)
            w.writerow([f"theta{param_index + 1}"] + [f"{r.config.method}:{r.config.run_name}" for r in results])
            cols = [m.pdf(grid[:, None]) for m in margs]
            for i, g in enumerate(grid):
                w.writerow([repr(float(g))] + [repr(float(c[i])) for c in cols])
    return path
