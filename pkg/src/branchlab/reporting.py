"""Serialize experiment reports to JSON and CSV.

Complex numbers become ``[re, im]``; floats use Python's shortest round-trip
repr, so identical runs produce byte-identical files and re-serializing a
parsed report reproduces it exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from typing import Any

import numpy as np

from .experiments.runner import BORN_NOTE, ExperimentReport

__all__ = ["report_to_dict", "dumps_json", "dumps_csv", "canonical_json"]


def _clean(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [_clean(float(value.real)), _clean(float(value.imag))]
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def report_to_dict(report: ExperimentReport, include_timing: bool = False) -> dict[str, Any]:
    iso = report.isolation
    out: dict[str, Any] = {
        "experiment": report.experiment,
        "config": report.config.to_dict(),
        "branches": [
            {
                "record": dict(b.record),
                "weight": b.weight,
                "weight_modulus_squared": b.norm2,
                "phase": b.phase,
            }
            for b in report.branches
        ],
        "born_weights": {
            "note": BORN_NOTE,
            "values": report.born_weights,
            "sum": sum(report.born_weights),
        },
        "isolation": None
        if iso is None
        else {
            "linearity_residual": iso.linearity_residual,
            "branch_fidelity_deviation": iso.branch_fidelity_deviation,
            "cross_talk": iso.cross_talk,
            "samples": iso.samples,
            "versions": iso.versions,
        },
        "support": {
            "observers": list(report.setup.records),
            "reduced_rank": report.support.reduced_rank,
            "leakage": report.support.leakage,
            "expected_records": list(report.support.expected_records),
        },
        "perception_matrix": report.perception,
        "pruned_mass": report.pruned_mass,
        "diagnostics": {
            name: {"value": v, "tolerance": tol, "pass": bool(v <= tol)}
            for name, (v, tol) in report.diagnostics.items()
        },
        "passed": report.passed,
        "payload": report.payload,
    }
    if include_timing:
        out["wall_time_s"] = report.wall_time
    return _clean(out)


def canonical_json(data: Any) -> str:
    return json.dumps(data, indent=2, allow_nan=False) + "\n"


def dumps_json(report: ExperimentReport, include_timing: bool = False) -> str:
    return canonical_json(report_to_dict(report, include_timing))


def dumps_csv(report: ExperimentReport) -> str:
    """Branch table only: records, squared weight, phase, Born weight."""
    records = list(report.setup.records)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["branch", *records, "weight_modulus_squared", "phase", "born_weight_external_postulate"])
    for k, b in enumerate(report.branches):
        writer.writerow([k, *(b.record[r] for r in records), repr(b.norm2), repr(b.phase), repr(b.norm2)])
    return buf.getvalue()
