"""JSON reports (schema "rsg-report/1") and CSV field tables."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import jsonschema
import numpy as np

from .grid import Grid
from .model import GameModel, MarkovStrategy

SCHEMA_VERSION = "rsg-report/1"
COMMANDS = ("eigen", "sweep", "nash", "simulate", "check-lyapunov")

_RESULT_KEYS = {
    "eigen": ["player", "lam", "lo", "hi", "lambda_history", "termination", "selector_gap"],
    "sweep": ["player", "entries", "radii", "lambdas", "lam_inf"],
    "nash": ["lambdas", "residuals", "converged", "cycle_detected", "trace", "deviations"],
    "simulate": ["estimates"],
    "check-lyapunov": ["ok", "case", "alpha", "offending", "surrogate_ok"],
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "command", "status", "exit_code", "config", "result", "files"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "command": {"enum": list(COMMANDS)},
        "status": {"enum": ["ok", "not-converged", "failed"]},
        "exit_code": {"enum": [0, 1, 2]},
        "error": {"type": ["string", "null"]},
        "config": {"type": "object"},
        "result": {"type": "object"},
        "files": {"type": "array", "items": {"type": "string"}},
    },
    "allOf": [
        {
            "if": {"properties": {"command": {"const": cmd}, "status": {"not": {"const": "failed"}}}},
            "then": {"properties": {"result": {"required": keys}}},
        }
        for cmd, keys in _RESULT_KEYS.items()
    ],
}

_SCHEMAS = {SCHEMA_VERSION: REPORT_SCHEMA}


def plain(obj):
    """numpy/tuple/non-finite aware conversion to JSON-ready Python values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(report: dict) -> str:
    return json.dumps(plain(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def validate_report(report: dict) -> None:
    """Validate against the schema named by the report's own version field."""
    version = report.get("schema")
    if version not in _SCHEMAS:
        raise jsonschema.ValidationError(f"unknown report schema {version!r}")
    jsonschema.validate(report, _SCHEMAS[version])


def write_report(path: Path, report: dict) -> str:
    text = dumps(report)
    validate_report(json.loads(text))
    Path(path).write_text(text)
    return text


def _coord_names(grid: Grid) -> list[str]:
    return [f"x{k}" for k in range(grid.dim)]


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def write_psi_csv(path: Path, grid: Grid, psi) -> None:
    """psi on every node; boundary nodes carry the Dirichlet value 0."""
    psi = np.asarray(psi, dtype=float)
    full = np.zeros(grid.n_nodes)
    if psi.shape[0] == grid.n_nodes:
        full[:] = psi
    else:
        full[grid.interior_idx] = psi
    _write_rows(path, _coord_names(grid) + ["psi"], np.column_stack([grid.coords, full]))


def write_strategy_csv(path: Path, grid: Grid, model: GameModel, s: MarkovStrategy) -> None:
    names = [f"p_{a.name}" for a in model.actions[s.player - 1].actions]
    _write_rows(path, _coord_names(grid) + names, np.column_stack([grid.coords, s.probs]))
