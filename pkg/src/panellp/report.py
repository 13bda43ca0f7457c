"""Serialization of study and simulation results to CSV and JSON, plus the
run manifest.

CSV is the canonical output; JSON mirrors the same rows losslessly (floats
are emitted with shortest round-trip formatting in both). The manifest pins
everything needed to reproduce an output directory byte for byte: command,
fully resolved configuration, input digests, tool version, and seed. It
deliberately carries no timestamps.
"""

from __future__ import annotations

import dataclasses
import hashlib
import io
import json
from typing import Any

import numpy as np

from . import __version__
from .driver import ComparisonTable, IRFResult
from .simulate import SimReport

IRF_HEADER = "horizon,estimator,coefficient,se,ci_lo,ci_hi,n_units,n_rows"
SIM_HEADER = "dgp,rho,N,T,h,estimator,truth,mean,bias,rmse,coverage,sd,n_reps,n_failed"
COMPARISON_HEADER = (
    "estimator,h_peak,coef_at_peak,baseline,eval_h,coefficient,baseline_coefficient,rel_diff_pct"
)


def _fmt(x: Any) -> str:
    if isinstance(x, float):
        if np.isnan(x):
            return ""
        return repr(x)
    if x is None:
        return ""
    return str(x)


def irf_rows(result: IRFResult) -> list[dict[str, Any]]:
    rows = []
    for c in result.cells:
        rows.append({
            "horizon": c.horizon,
            "estimator": c.estimator,
            "coefficient": c.coefficient if c.ok else None,
            "se": c.se if c.ok else None,
            "ci_lo": c.ci_lo if c.ok else None,
            "ci_hi": c.ci_hi if c.ok else None,
            "n_units": c.n_units if c.ok else None,
            "n_rows": c.n_rows if c.ok else None,
            "ok": c.ok,
            "error": c.error,
            "warnings": list(c.warnings),
        })
    return rows


def irf_csv(result: IRFResult) -> str:
    out = io.StringIO()
    out.write(IRF_HEADER + "\n")
    for row in irf_rows(result):
        out.write(",".join(_fmt(row[k]) for k in IRF_HEADER.split(",")) + "\n")
    return out.getvalue()


def comparison_rows(table: ComparisonTable) -> list[dict[str, Any]]:
    peaks = {p.estimator: p for p in table.peaks}
    rows = []
    for p in table.peaks:
        rows.append({
            "estimator": p.estimator, "h_peak": p.h_peak, "coef_at_peak": p.coefficient,
            "baseline": None, "eval_h": None, "coefficient": None,
            "baseline_coefficient": None, "rel_diff_pct": None,
        })
    for d in table.diffs:
        rows.append({
            "estimator": d.estimator, "h_peak": peaks[d.estimator].h_peak,
            "coef_at_peak": peaks[d.estimator].coefficient,
            "baseline": d.baseline, "eval_h": d.horizon, "coefficient": d.coefficient,
            "baseline_coefficient": d.baseline_coefficient,
            "rel_diff_pct": d.rel_diff_pct if d.defined else "undefined",
        })
    return rows


def comparison_csv(table: ComparisonTable) -> str:
    out = io.StringIO()
    out.write(COMPARISON_HEADER + "\n")
    for row in comparison_rows(table):
        out.write(",".join(_fmt(row[k]) for k in COMPARISON_HEADER.split(",")) + "\n")
    return out.getvalue()


def sim_rows(report: SimReport) -> list[dict[str, Any]]:
    cfg = report.config
    rows = []
    for c in report.cells:
        rows.append({
            "dgp": cfg.dgp, "rho": cfg.rho, "N": cfg.n_units, "T": cfg.n_periods,
            "h": c.horizon, "estimator": c.estimator, "truth": c.truth,
            "mean": c.mean, "bias": c.bias, "rmse": c.rmse, "coverage": c.coverage,
            "sd": c.sd, "n_reps": c.n_reps, "n_failed": report.n_failed,
        })
    return rows


def sim_csv(report: SimReport) -> str:
    out = io.StringIO()
    out.write(SIM_HEADER + "\n")
    for row in sim_rows(report):
        out.write(",".join(_fmt(row[k]) for k in SIM_HEADER.split(",")) + "\n")
    return out.getvalue()


def raw_estimates_csv(report: SimReport) -> str:
    """Per-replication estimates and coverage flags (requires keep_raw)."""
    if report.raw_estimates is None or report.raw_covered is None:
        raise ValueError("report was built without keep_raw")
    lo, hi = report.config.estimation_horizons()
    idx = [(h, e) for h in range(lo, hi + 1) for e in report.config.ordered_estimators()]
    out = io.StringIO()
    out.write("replication,h,estimator,estimate,covered\n")
    for r in range(report.raw_estimates.shape[0]):
        for k, (h, e) in enumerate(idx):
            val = report.raw_estimates[r, k]
            cov = "" if np.isnan(val) else str(bool(report.raw_covered[r, k])).lower()
            out.write(f"{r},{h},{e},{_fmt(float(val))},{cov}\n")
    return out.getvalue()


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and np.isnan(obj):
        return None
    return obj


def to_json(rows: Any) -> str:
    return json.dumps(_jsonable(rows), indent=2, sort_keys=False) + "\n"


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def manifest(command: str, config: Any, inputs: dict[str, str], seed: int | None) -> dict[str, Any]:
    """Everything needed to reproduce the run byte for byte (no timestamps).

    ``inputs`` maps a role (e.g. "data", "spec") to a file path; the
    manifest records each path with its SHA-256 digest.
    """
    resolved = dataclasses.asdict(config) if dataclasses.is_dataclass(config) else dict(config)
    return {
        "tool": "panellp",
        "version": __version__,
        "command": command,
        "config": _jsonable(resolved),
        "inputs": {
            role: {"path": path, "sha256": sha256_file(path)} for role, path in inputs.items()
        },
        "seed": seed,
    }
