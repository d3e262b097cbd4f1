"""Command line entry point ``lfi``."""

from __future__ import annotations

import argparse
import glob
import itertools
import json
import logging
import sys
from pathlib import Path

from ..errors import LfiError
from .config import ExperimentConfig, dump_config, load_config
from .plots import KINDS, emit_plot_data
from .runner import load_result, run_experiment


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["rng_seed"] = args.seed
    if getattr(args, "out", None) is not None:
        changes["output_dir"] = args.out
    return cfg.replace(**changes) if changes else cfg


def _summary(result) -> dict:
    return {
        "run": result.config.run_name,
        "n_simulations": result.n_simulations,
        "metrics": result.metrics,
        "flags": result.flags,
        "path": str(result.path),
    }


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    result = run_experiment(cfg)
    print(json.dumps(_summary(result)))
    return 0


def sweep_configs(cfg: ExperimentConfig):
    """One config per point of the Cartesian product of ``cfg.sweep``; each writes to its own subdirectory."""
    keys = list(cfg.sweep)
    for values in itertools.product(*(cfg.sweep[k] for k in keys)):
        point = cfg.replace(sweep={})
        tag = []
        for k, v in zip(keys, values):
            point = point.with_setting(k, v)
            tag.append(f"{k}={v}")
        out = Path(cfg.output_dir) / "_".join(tag) if tag else Path(cfg.output_dir)
        yield point.replace(output_dir=str(out))


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if not cfg.sweep:
        print("config has no sweep section", file=sys.stderr)
        return 2
    status = 0
    for point in sweep_configs(cfg):
        try:
            print(json.dumps(_summary(run_experiment(point))))
        except LfiError as exc:
            status = 1
            print(json.dumps({"output_dir": point.output_dir, "error": f"{type(exc).__name__}: {exc}"}))
    return status


def cmd_pilot(args) -> int:
    from ..simulators import make_problem

    cfg = ExperimentConfig(args.experiment, "mdn_prior", problem_seed=args.seed, data_dir=args.out)
    make_problem(cfg.experiment, cfg.problem_seed, cfg.data_path)
    print(cfg.data_path)
    return 0


def cmd_plot(args) -> int:
    paths = sorted({Path(p).parent if p.endswith("manifest.json") else Path(p) for p in glob.glob(args.runs)})
    results = [load_result(p) for p in paths if (p / "manifest.json").exists()]
    if not results:
        print(f"no runs match {args.runs!r}", file=sys.stderr)
        return 2
    out = emit_plot_data(results, args.kind, args.out, param_index=args.param)
    print(out)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_all

    results = run_all(seed=args.seed, names=args.only)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_config(args) -> int:
    print(dump_config(load_config(args.config)), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lfi", description="Likelihood-free inference experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one configured experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run every point of the config's sweep section")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    pl = sub.add_parser("pilot", help="generate and persist pilot statistics and the observation")
    pl.add_argument("--experiment", required=True, choices=("mog", "blr", "lv", "mg1"))
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--out", help="directory (default data/<experiment>_seed<seed>)")
    pl.set_defaults(func=cmd_pilot)

    pt = sub.add_parser("plot", help="emit a plot table from persisted runs")
    pt.add_argument("--kind", required=True, choices=KINDS)
    pt.add_argument("--runs", required=True, help="glob matching run directories")
    pt.add_argument("--out", default="plot.csv")
    pt.add_argument("--param", type=int, default=0, help="parameter index for marginal tables")
    pt.set_defaults(func=cmd_plot)

    st = sub.add_parser("selftest", help="run the oracle self-checks")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--only", nargs="+", choices=("gradients", "division", "ess", "gillespie"))
    st.set_defaults(func=cmd_selftest)

    c = sub.add_parser("config", help="validate a config file and print it normalized")
    c.add_argument("--config", required=True)
    c.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except LfiError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
