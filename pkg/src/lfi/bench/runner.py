"""Run one configured experiment end to end and persist the outcome."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from ..abc import McmcConfig, SmcConfig, fit_samples, mcmc_abc, rejection_abc, smc_abc
from ..errors import LfiError
from ..gmath import Gaussian, GaussianMixture
from ..inference import InferenceConfig, run_algorithm1, run_algorithm2
from ..simulators import make_problem
from .config import ExperimentConfig
from .metrics import metric_kl_to_true, metric_neg_logprob_true, metric_tv_on_grid

log = logging.getLogger(__name__)

# network shapes per experiment; K applies to the final posterior net
ARCHITECTURES = {
    "mog": dict(prior_hidden=(20,), proposal_hidden=(20,), K=2),
    "blr": dict(prior_hidden=(50,), proposal_hidden=(50,), K=1),
    "lv": dict(prior_hidden=(50, 50), proposal_hidden=(50,), K=1),
    "mg1": dict(prior_hidden=(50, 50), proposal_hidden=(50,), K=8),
}

# simulation budgets and training lengths; our own tuning
MDN_DEFAULTS = {
    "mog": {
        "mdn_prior": dict(n_final=10000, epochs_final=500),
        "proposal": dict(n_per_iteration=200, max_iterations=8, n_final=1000, epochs_proposal=300, epochs_final=1000),
    },
    "blr": {
        "mdn_prior": dict(n_final=50000, epochs_final=100),
        "proposal": dict(n_per_iteration=300, max_iterations=10, n_final=2000, epochs_proposal=300, epochs_final=300),
    },
    "lv": {
        "mdn_prior": dict(n_final=20000, epochs_final=200),
        "proposal": dict(n_per_iteration=300, max_iterations=10, n_final=2000, epochs_proposal=300, epochs_final=300),
    },
    "mg1": {
        "mdn_prior": dict(n_final=20000, epochs_final=200),
        "proposal": dict(n_per_iteration=300, max_iterations=10, n_final=2000, epochs_proposal=300, epochs_final=300),
    },
}

ABC_DEFAULTS = {
    "mog": dict(n_samples=1000, fit="em", fit_components=2),
    "blr": dict(n_samples=1000, fit="gaussian"),
    "lv": dict(n_samples=200, fit="gaussian"),
    "mg1": dict(n_samples=1000, fit="em", fit_components=8),
}

TV_GRID = np.linspace(-10.0, 10.0, 2001)


@dataclass
class RunResult:
    """Outcome of one run.

    ``phases`` maps phase names to simulation counts; they sum to
    ``n_simulations``. ``timings`` holds wall-clock seconds and is excluded
    from reproducibility checks.
    """

    config: ExperimentConfig
    posterior: GaussianMixture
    n_simulations: int
    metrics: Dict[str, float]
    phases: Dict[str, int] = field(default_factory=dict)
    samples: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    timings: Dict[str, float] = field(default_factory=dict)
    diagnostics: Dict = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)
    path: Optional[Path] = None

    @property
    def is_abc(self) -> bool:
        return self.config.is_abc

    @property
    def epsilon(self) -> float:
        return float(self.diagnostics.get("epsilon", np.nan))

    @property
    def cost(self) -> float:
        """Total simulations for MDN runs, simulations per effective sample for ABC."""
        if self.is_abc:
            return self.n_simulations / self.metrics["ess"]
        return float(self.n_simulations)


# --------------------------------------------------------------------------
# (de)serialization of mixtures


def mixture_to_dict(m: GaussianMixture) -> dict:
    return {
        "weights": m.weights.tolist(),
        "means": [c.mean.tolist() for c in m.components],
        "prec_chols": [c.prec_chol.tolist() for c in m.components],
    }


def mixture_from_dict(d: dict) -> GaussianMixture:
    comps = tuple(Gaussian(np.array(mu), np.array(u)) for mu, u in zip(d["means"], d["prec_chols"]))
    return GaussianMixture(np.array(d["weights"]), comps)


def gaussian_to_dict(g: Gaussian) -> dict:
    return {"mean": g.mean.tolist(), "prec_chol": g.prec_chol.tolist()}


# --------------------------------------------------------------------------
# dispatch


def inference_config(cfg: ExperimentConfig, x_o) -> InferenceConfig:
    arch = ARCHITECTURES[cfg.experiment]
    key = "mdn_prior" if cfg.method == "mdn_prior" else "proposal"
    settings = dict(MDN_DEFAULTS[cfg.experiment][key])
    settings.update(
        hidden_proposal=arch["proposal_hidden"],
        hidden_final=arch["prior_hidden"] if cfg.method == "mdn_prior" else arch["proposal_hidden"],
        K_final=arch["K"],
    )
    settings.update(cfg.inference)
    return InferenceConfig(x_o=tuple(np.ravel(x_o)), rng_seed=cfg.rng_seed, **settings)


def _run_mdn(cfg, problem, out):
    icfg = inference_config(cfg, problem.x_o)
    out["diagnostics"]["inference_config"] = {
        k: (list(v) if isinstance(v, tuple) else v) for k, v in icfg.__dict__.items()
    }
    if cfg.method == "mdn_prior":
        t = time.perf_counter()
        fit = run_algorithm2(problem, problem.prior, None, None, icfg)
        out["timings"]["algorithm2"] = time.perf_counter() - t
        out["phases"]["algorithm2"] = fit.n_simulations
        out["diagnostics"]["mass_outside_prior"] = fit.mass_outside_prior
        return fit.posterior
    t = time.perf_counter()
    prop = run_algorithm1(problem, problem.prior, icfg)
    out["timings"]["algorithm1"] = time.perf_counter() - t
    out["phases"]["algorithm1"] = prop.n_simulations
    out["diagnostics"].update(
        proposal_trace=[gaussian_to_dict(g) for g in prop.trace],
        proposal_sym_kl=prop.sym_kl,
        proposal_converged=prop.converged,
        proposal_iterations=prop.n_iterations,
        proposal_retries=prop.n_retries,
    )
    if cfg.method == "proposal_prior":
        return GaussianMixture.single(prop.proposal)
    t = time.perf_counter()
    fit = run_algorithm2(problem, problem.prior, prop.proposal, prop.net, icfg)
    out["timings"]["algorithm2"] = time.perf_counter() - t
    out["phases"]["algorithm2"] = fit.n_simulations
    out["diagnostics"]["mass_outside_prior"] = fit.mass_outside_prior
    return fit.posterior


def abc_settings(cfg: ExperimentConfig) -> dict:
    settings = dict(ABC_DEFAULTS[cfg.experiment])
    settings.update(cfg.abc)
    return settings


def _run_abc(cfg, problem, out):
    s = abc_settings(cfg)
    rng = np.random.default_rng([cfg.rng_seed, 5])
    budget = int(float(s.get("max_simulations", 1e7)))
    t = time.perf_counter()
    if cfg.method == "rejection":
        res = rejection_abc(problem, problem.prior, problem.x_o, float(s["epsilon"]), int(s["n_samples"]), rng, budget)
        out["phases"]["rejection"] = res.n_simulations
    elif cfg.method == "mcmc":
        eps = float(s["epsilon"])
        start = rejection_abc(problem, problem.prior, problem.x_o, eps, 1, rng, budget)
        mc = s["mcmc"]
        mcfg = McmcConfig(float(mc["proposal_std"]), int(mc["n_steps"]), start.samples[0],
                          budget - start.n_simulations)
        res = mcmc_abc(problem, problem.prior, problem.x_o, eps, mcfg, rng)
        out["phases"]["initialization"] = start.n_simulations
        out["phases"]["mcmc"] = res.n_simulations
    else:
        sm = s["smc"]
        scfg = SmcConfig(int(sm["n_particles"]), float(sm["eps_initial"]), float(sm["eps_decay"]),
                         int(sm["n_rounds"]), budget)
        res = smc_abc(problem, problem.prior, problem.x_o, scfg, rng)
        out["phases"]["smc"] = res.n_simulations
        out["diagnostics"]["rounds"] = res.rounds
    out["timings"][cfg.method] = time.perf_counter() - t
    out["flags"].extend(res.flags)
    out["samples"], out["weights"] = res.samples, res.weights
    out["diagnostics"].update(epsilon=res.epsilon, acceptance_rate=res.acceptance_rate)
    out["metrics"]["ess"] = res.ess
    out["metrics"]["sims_per_effective_sample"] = res.sims_per_effective_sample
    fit_rng = np.random.default_rng([cfg.rng_seed, 6])
    return fit_samples(res, s.get("fit", "gaussian"), int(s.get("fit_components", 8)), fit_rng)


def compute_metrics(experiment: str, problem, posterior: GaussianMixture) -> Dict[str, float]:
    metrics = {}
    if experiment == "mog":
        metrics["tv_to_true"] = metric_tv_on_grid(posterior, problem.true_posterior(), TV_GRID)
    if experiment == "blr":
        learned = posterior if posterior.n_components == 1 else None
        if learned is not None:
            metrics["kl_to_true"] = metric_kl_to_true(problem.true_posterior(), learned)
    if problem.theta_true is not None:
        metrics["neg_logprob_true"] = metric_neg_logprob_true(posterior, problem.theta_true)
    return metrics


def run_experiment(cfg: ExperimentConfig, persist: bool = True) -> RunResult:
    """Run the configured method on the configured problem and persist the result.

    Problem artifacts are loaded from ``cfg.data_path`` or generated there
    under ``problem_seed``. Outputs go to ``<output_dir>/<run_name>/``.
    """
    t0 = time.perf_counter()
    problem = make_problem(cfg.experiment, cfg.problem_seed, cfg.data_path)
    out = dict(phases={}, timings={}, diagnostics={}, flags=[], metrics={}, samples=None, weights=None)
    try:
        posterior = _run_abc(cfg, problem, out) if cfg.is_abc else _run_mdn(cfg, problem, out)
    except LfiError as exc:
        if persist:
            save_failure(cfg, exc, out, Path(cfg.output_dir) / cfg.run_name)
        raise
    out["metrics"].update(compute_metrics(cfg.experiment, problem, posterior))
    out["timings"]["total"] = time.perf_counter() - t0
    result = RunResult(
        cfg,
        posterior,
        int(sum(out["phases"].values())),
        out["metrics"],
        out["phases"],
        out["samples"],
        out["weights"],
        out["timings"],
        out["diagnostics"],
        out["flags"],
    )
    if persist:
        save_result(result, Path(cfg.output_dir) / cfg.run_name)
    return result


# --------------------------------------------------------------------------
# persistence


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def save_result(result: RunResult, directory) -> Path:
    """Write ``manifest.json`` (config, seed, counts, metrics, posterior) and ABC samples."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": result.config.to_dict(),
        "rng_seed": result.config.rng_seed,
        "n_simulations": result.n_simulations,
        "phases": result.phases,
        "metrics": result.metrics,
        "flags": result.flags,
        "posterior": mixture_to_dict(result.posterior),
        "diagnostics": result.diagnostics,
        "timings": result.timings,
    }
    (d / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2))
    if result.samples is not None:
        block = np.column_stack([result.weights, result.samples])
        cols = ",".join(["weight"] + [f"theta{i + 1}" for i in range(result.samples.shape[1])])
        np.savetxt(d / "samples.csv", block, delimiter=",", header=cols, comments="", fmt="%.17g")
    result.path = d
    return d


def save_failure(cfg: ExperimentConfig, exc: Exception, partial: dict, directory) -> Path:
    """Write a manifest recording the error and whatever phases completed."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": cfg.to_dict(),
        "rng_seed": cfg.rng_seed,
        "error": {"type": type(exc).__name__, "message": str(exc)},
        "phases": partial["phases"],
        "diagnostics": partial["diagnostics"],
        "timings": partial["timings"],
    }
    (d / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2))
    return d


def load_result(directory) -> RunResult:
    d = Path(directory)
    m = json.loads((d / "manifest.json").read_text())
    if "error" in m:
        raise ValueError(f"run in {d} failed: {m['error']['type']}")
    samples = weights = None
    if (d / "samples.csv").exists():
        block = np.loadtxt(d / "samples.csv", delimiter=",", skiprows=1, ndmin=2)
        weights, samples = block[:, 0], block[:, 1:]
    return RunResult(
        ExperimentConfig.from_dict(m["config"]),
        mixture_from_dict(m["posterior"]),
        m["n_simulations"],
        m["metrics"],
        m["phases"],
        samples,
        weights,
        m["timings"],
        m["diagnostics"],
        m["flags"],
        d,
    )
