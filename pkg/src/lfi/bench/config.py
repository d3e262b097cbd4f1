"""Experiment configuration: schema, validation and YAML round trip.

A config is a nested mapping::

    experiment: mog            # mog | blr | lv | mg1
    method: mdn_proposal       # mdn_prior | proposal_prior | mdn_proposal | rejection | mcmc | smc
    rng_seed: 0
    problem_seed: 0            # seed of the persisted pilot and observation artifacts
    output_dir: runs
    data_dir: null             # default: data/<experiment>_seed<problem_seed>
    inference: {...}           # MDN methods only; InferenceConfig fields
    abc: {...}                 # ABC methods only
    sweep: {key: [values]}     # optional; used by ``lfi sweep``

``inference`` accepts any :class:`lfi.inference.InferenceConfig` field except
``x_o`` and ``rng_seed``. ``abc`` accepts ``epsilon``, ``n_samples``,
``max_simulations``, ``fit`` (``gaussian`` or ``em``), ``fit_components``,
``mcmc`` (``proposal_std``, ``n_steps``) and ``smc`` (``n_particles``,
``eps_initial``, ``eps_decay``, ``n_rounds``). Sweep keys name a field of
``inference`` or ``abc``.
"""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from ..errors import ConfigError
from ..inference import InferenceConfig

EXPERIMENTS = ("mog", "blr", "lv", "mg1")
MDN_METHODS = ("mdn_prior", "proposal_prior", "mdn_proposal")
ABC_METHODS = ("rejection", "mcmc", "smc")
METHODS = MDN_METHODS + ABC_METHODS

INFERENCE_KEYS = tuple(f.name for f in dataclasses.fields(InferenceConfig) if f.name not in ("x_o", "rng_seed"))
ABC_KEYS = ("epsilon", "n_samples", "max_simulations", "fit", "fit_components", "mcmc", "smc")
MCMC_KEYS = ("proposal_std", "n_steps")
SMC_KEYS = ("n_particles", "eps_initial", "eps_decay", "n_rounds")
TOP_KEYS = ("experiment", "method", "rng_seed", "problem_seed", "output_dir", "data_dir", "inference", "abc", "sweep")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    method: str
    rng_seed: int = 0
    problem_seed: int = 0
    output_dir: str = "runs"
    data_dir: Optional[str] = None
    inference: Dict[str, Any] = field(default_factory=dict)
    abc: Dict[str, Any] = field(default_factory=dict)
    sweep: Dict[str, list] = field(default_factory=dict)

    def __post_init__(self):
        validate(self)

    @property
    def is_abc(self) -> bool:
        return self.method in ABC_METHODS

    @property
    def data_path(self) -> Path:
        if self.data_dir is not None:
            return Path(self.data_dir)
        return Path("data") / f"{self.experiment}_seed{self.problem_seed}"

    @property
    def run_name(self) -> str:
        return f"{self.experiment}_{self.method}_seed{self.rng_seed}"

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "method": self.method,
            "rng_seed": self.rng_seed,
            "problem_seed": self.problem_seed,
            "output_dir": self.output_dir,
            "data_dir": self.data_dir,
            "inference": copy.deepcopy(self.inference),
            "abc": copy.deepcopy(self.abc),
            "sweep": copy.deepcopy(self.sweep),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(d) - set(TOP_KEYS)
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        for key in ("experiment", "method"):
            if key not in d:
                raise ConfigError(f"missing required key {key!r}")
        d = {k: (copy.deepcopy(v) if v is not None or k == "data_dir" else v) for k, v in d.items()}
        for key in ("inference", "abc", "sweep"):
            if d.get(key) is None:
                d[key] = {}
        return cls(**d)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def with_setting(self, key: str, value) -> "ExperimentConfig":
        """Copy with ``key`` set in whichever section (inference or abc) owns it."""
        if self.is_abc:
            abc = copy.deepcopy(self.abc)
            abc[key] = value
            return self.replace(abc=abc, sweep={})
        inf = copy.deepcopy(self.inference)
        inf[key] = value
        return self.replace(inference=inf, sweep={})


def _check_keys(section: dict, allowed, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _positive(value, name):
    try:
        ok = float(value) > 0
    except (TypeError, ValueError):
        ok = False
    if not ok:
        raise ConfigError(f"{name} must be a positive number, got {value!r}")


def validate(cfg: ExperimentConfig) -> None:
    """Raise :class:`ConfigError` unless settings are consistent with the method."""
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {cfg.experiment!r}")
    if cfg.method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {cfg.method!r}")
    for name in ("rng_seed", "problem_seed"):
        if not isinstance(getattr(cfg, name), int) or getattr(cfg, name) < 0:
            raise ConfigError(f"{name} must be a non-negative integer")
    if cfg.is_abc:
        if cfg.inference:
            raise ConfigError(f"method {cfg.method!r} takes no 'inference' section")
        _check_keys(cfg.abc, ABC_KEYS, "abc")
        if cfg.method in ("rejection", "mcmc") and "epsilon" not in cfg.abc:
            raise ConfigError(f"method {cfg.method!r} needs abc.epsilon")
        if "epsilon" in cfg.abc:
            _positive(cfg.abc["epsilon"], "abc.epsilon")
        if cfg.method == "mcmc":
            _check_keys(cfg.abc.get("mcmc", {}), MCMC_KEYS, "abc.mcmc")
            for k in MCMC_KEYS:
                if k not in cfg.abc.get("mcmc", {}):
                    raise ConfigError(f"mcmc needs abc.mcmc.{k}")
                _positive(cfg.abc["mcmc"][k], f"abc.mcmc.{k}")
        elif "mcmc" in cfg.abc:
            raise ConfigError("abc.mcmc is only valid for method 'mcmc'")
        if cfg.method == "smc":
            _check_keys(cfg.abc.get("smc", {}), SMC_KEYS, "abc.smc")
            for k in SMC_KEYS:
                if k not in cfg.abc.get("smc", {}):
                    raise ConfigError(f"smc needs abc.smc.{k}")
                _positive(cfg.abc["smc"][k], f"abc.smc.{k}")
            if not float(cfg.abc["smc"]["eps_decay"]) < 1:
                raise ConfigError("abc.smc.eps_decay must lie in (0, 1)")
        elif "smc" in cfg.abc:
            raise ConfigError("abc.smc is only valid for method 'smc'")
        if cfg.abc.get("fit", "gaussian") not in ("gaussian", "em"):
            raise ConfigError("abc.fit must be 'gaussian' or 'em'")
        allowed_sweep = ABC_KEYS
    else:
        if cfg.abc:
            raise ConfigError(f"method {cfg.method!r} takes no 'abc' section")
        _check_keys(cfg.inference, INFERENCE_KEYS, "inference")
        allowed_sweep = INFERENCE_KEYS
    _check_keys(cfg.sweep, allowed_sweep, "sweep")
    for k, v in cfg.sweep.items():
        if not isinstance(v, list) or not v:
            raise ConfigError(f"sweep.{k} must be a non-empty list")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return ExperimentConfig.from_dict(data)


def dump_config(cfg: ExperimentConfig, path=None) -> str:
    text = yaml.safe_dump(cfg.to_dict(), sort_keys=False)
    if path is not None:
        Path(path).write_text(text)
    return text
