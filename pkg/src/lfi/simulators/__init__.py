"""Benchmark simulators, summary statistics and pilot-run normalization."""

from .blr import BlrProblem, blr_true_posterior, sim_blr
from .gillespie import gillespie
from .linear_gaussian import LinearGaussianProblem
from .lotka_volterra import LvProblem, PilotStats, gillespie_lv, lv_summary, pilot_normalize
from .mg1 import Mg1Problem, PilotMoments, pilot_whiten, sim_mg1
from .mog import MogProblem, mog_true_posterior, sim_mog

PROBLEMS = {
    "mog": MogProblem,
    "blr": BlrProblem,
    "lv": LvProblem,
    "mg1": Mg1Problem,
}


def make_problem(name, seed=0, directory=None, **kwargs):
    """Load a persisted problem from ``directory`` if present, else generate (and save) it."""
    from pathlib import Path

    cls = PROBLEMS[name]
    if directory is not None:
        d = Path(directory)
        marker = {"mog": None, "blr": "blr_x_o.txt", "lv": "lv_x_o.txt", "mg1": "mg1_x_o.txt"}[name]
        if marker is None:
            return cls()
        if (d / marker).exists():
            return cls.load(d)
        problem = cls.generate(seed=seed, **kwargs)
        problem.save(d, seed)
        return problem
    return cls.generate(seed=seed, **kwargs)


__all__ = [
    "BlrProblem",
    "LinearGaussianProblem",
    "LvProblem",
    "Mg1Problem",
    "MogProblem",
    "PROBLEMS",
    "PilotMoments",
    "PilotStats",
    "blr_true_posterior",
    "gillespie",
    "gillespie_lv",
    "lv_summary",
    "make_problem",
    "mog_true_posterior",
    "pilot_normalize",
    "pilot_whiten",
    "sim_blr",
    "sim_mg1",
    "sim_mog",
]
