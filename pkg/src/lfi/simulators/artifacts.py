"""Plain-text numeric artifacts with a one-line provenance header."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def save_artifact(path, array, experiment: str, seed: int, **params) -> None:
    """Write ``array`` (1-d or 2-d) with a header ``experiment=... seed=... key=value ...``."""
    fields = [f"experiment={experiment}", f"seed={seed}"]
    fields += [f"{k}={_fmt(v)}" for k, v in params.items()]
    arr = np.atleast_2d(np.asarray(array, dtype=np.float64))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, arr, fmt="%.17g", header=" ".join(fields))


def _fmt(v):
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v).replace(" ", "_")


def load_artifact(path):
    """Return ``(array, header_dict)``; the array is always 2-d."""
    with open(path) as fh:
        header = fh.readline().lstrip("#").split()
    meta = dict(f.split("=", 1) for f in header)
    arr = np.atleast_2d(np.loadtxt(path, ndmin=2))
    return arr, meta
