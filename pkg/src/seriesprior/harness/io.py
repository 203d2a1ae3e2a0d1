"""Deterministic artifact writers.

Files carry no timestamps or host information; floats are written with
``repr`` so values round-trip exactly and output bytes depend only on the
inputs.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(header, rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def write_chain_csv(chain, path) -> Path:
    """One state per row: ``iter, J, s2, f1..fK``; coefficients past J are left empty."""
    K = chain.coeffs.shape[1]
    header = ["iter", "J", "s2"] + [f"f{j}" for j in range(1, K + 1)]
    rows = (
        [i, int(chain.J[i]), chain.s2[i]] + list(chain.coeffs[i, : chain.J[i]]) + [None] * (K - chain.J[i])
        for i in range(len(chain))
    )
    return write_csv(header, rows, path)
