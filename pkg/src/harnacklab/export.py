"""On-disk formats: CSV tables, JSON documents and stored trajectories.

Numbers are written with 17 significant digits and files always use LF line
endings, so identical runs give identical bytes.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import geometry as geo
from .errors import ConfigError, CorruptedState
from .flow import EquationKind, FlowTrajectory
from .harnack import HarnackReport

TRAJECTORY_COLUMNS = ("step", "t", "min_R", "max_R", "mass_or_blank", "sup_u", "inf_u")
SERIES_COLUMNS = ("t", "sup_quantity", "min_R")
CONVERGENCE_COLUMNS = (
    "N",
    "residual_H",
    "residual_P_or_blank",
    "mass_drift",
    "order_residual_H",
    "order_residual_P",
    "order_mass_drift",
)


def fmt(value) -> str:
    """17-significant-digit text for a number; blank for ``None``."""
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return "%.17g" % float(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[Optional[float]]]]:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    header = lines[0].split(",")
    rows = [[float(c) if c else None for c in line.split(",")] for line in lines[1:]]
    return header, rows


def jsonable(value):
    """Convert numpy scalars/arrays and non-finite floats for JSON output."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        return x if math.isfinite(x) else None
    if isinstance(value, EquationKind):
        return value.value
    return value


def write_json(path: Path, doc) -> Path:
    path = Path(path)
    text = json.dumps(jsonable(doc), indent=2, sort_keys=True, allow_nan=False)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text + "\n")
    return path


# -- trajectories ----------------------------------------------------------------------


def trajectory_rows(traj: FlowTrajectory) -> list[tuple]:
    rows = []
    for k in range(len(traj)):
        sol = None if traj.solution is None else traj.solution[k]
        rows.append((
            k,
            traj.physical_time(k),
            traj.min_R[k],
            traj.max_R[k],
            None if traj.mass is None else traj.mass[k],
            None if sol is None else sol.max(),
            None if sol is None else sol.min(),
        ))
    return rows


def write_trajectory_csv(path: Path, traj: FlowTrajectory) -> Path:
    return write_csv(path, TRAJECTORY_COLUMNS, trajectory_rows(traj))


_META_KEYS = (
    "backend", "n", "L", "t_min", "sigma", "hypothesis_violated", "truncated",
    "terminal_time", "frozen", "interpolation_order", "fingerprint",
)


def save_trajectory(path: Path, traj: FlowTrajectory) -> Path:
    """Store every field needed to rebuild ``traj`` in a ``.npz`` archive."""
    meta = {key: getattr(traj, key) for key in _META_KEYS}
    meta["N"] = traj.grid.N
    meta["equation"] = None if traj.equation is None else traj.equation.value
    arrays = {"times": traj.times, "min_R": traj.min_R, "max_R": traj.max_R}
    for name in ("phi", "solution", "mass"):
        value = getattr(traj, name)
        if value is not None:
            arrays[name] = value
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_trajectory(path: Path) -> FlowTrajectory:
    try:
        with np.load(Path(path), allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            arrays = {name: data[name] for name in data.files if name != "meta"}
    except (OSError, ValueError, KeyError) as exc:
        raise CorruptedState(f"cannot read stored trajectory {path}: {exc}") from exc
    grid = geo.build_grid(meta["backend"], meta["N"], meta["L"])
    equation = None if meta["equation"] is None else EquationKind(meta["equation"])
    return FlowTrajectory(
        backend=meta["backend"],
        n=meta["n"],
        grid=grid,
        L=meta["L"],
        times=arrays["times"],
        phi=arrays.get("phi"),
        solution=arrays.get("solution"),
        min_R=arrays["min_R"],
        max_R=arrays["max_R"],
        equation=equation,
        t_min=meta["t_min"],
        sigma=meta["sigma"],
        mass=arrays.get("mass"),
        hypothesis_violated=meta["hypothesis_violated"],
        truncated=meta["truncated"],
        terminal_time=meta["terminal_time"],
        frozen=meta["frozen"],
        interpolation_order=meta["interpolation_order"],
        fingerprint=meta["fingerprint"],
    )


# -- reports ---------------------------------------------------------------------------


def write_series_csv(path: Path, report: HarnackReport) -> Path:
    rows = zip(report.times, report.sup_series, report.min_R_series)
    return write_csv(path, SERIES_COLUMNS, rows)


def report_document(report: HarnackReport, series_path: str) -> dict:
    doc = {
        "theorem": report.theorem,
        "window": list(report.window),
        "tolerance": report.tolerance,
        "max_violation": report.max_violation,
        "verdict": report.verdict,
        "series_path": series_path,
        "fingerprint": report.fingerprint,
    }
    summary = {k: v for k, v in report.details.items() if k != "queries"}
    if summary:
        doc["details"] = summary
    return doc


def path_documents(report: HarnackReport) -> list[dict]:
    """One record per query: query, Gamma, nodes, sweep actions and margin."""
    return [
        {
            "query": rec["query"],
            "gamma": rec["gamma"],
            "dp_value": rec["dp_value"],
            "nodes": [list(node) for node in rec["nodes"]],
            "sweep_actions": rec["sweep_actions"],
            "margin": rec["margin"],
            "scaled_violation": rec["scaled_violation"],
            "reverse_slack": rec["reverse_slack"],
        }
        for rec in report.details.get("queries", [])
    ]


def write_convergence_csv(path: Path, rows: Sequence[dict], orders: dict) -> Path:
    table = []
    for i, row in enumerate(rows):
        table.append((
            row["N"],
            row.get("residual_H"),
            row.get("residual_P"),
            row.get("mass_drift"),
            orders["residual_H"][i],
            orders["residual_P"][i],
            orders["mass_drift"][i],
        ))
    return write_csv(path, CONVERGENCE_COLUMNS, table)


def load_config_document(path: Path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError("config", f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config", "expected a JSON object")
    return doc
