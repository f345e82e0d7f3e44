"""Command-line front end: ``run``, ``verify`` and ``sweep``.

Exit codes: 0 success, 2 validation error (bad config, missing trajectory,
wrong equation for a theorem), 3 numerical failure, 4 a verdict failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from . import export
from .errors import ConfigError, HarnackLabError, InvalidParameter, ResolutionError, ValidationError
from .flow import (
    EquationKind,
    ScenarioConfig,
    digest,
    empirical_orders,
    mass_drift,
    run_conjugate,
    run_forward,
    terminal_data,
)
from .geometry import MIN_NODES
from .harnack import FAIL, THEOREMS, evolution_residual_H, evolution_residual_P, verify_theorem
from .pathopt import PathQuery, default_queries, verify_integrated_harnack

log = logging.getLogger("harnacklab")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_VERDICT = 0, 2, 3, 4
DEFAULT_ROOT = "runs"

CONFIG_FILE = "config.json"
MANIFEST_FILE = "manifest.json"
TRAJECTORY_CSV = "trajectory.csv"
TRAJECTORY_STORE = "trajectory.npz"
METRIC_CSV = "metric_trajectory.csv"
CONVERGENCE_CSV = "convergence.csv"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ValidationError):
        return EXIT_INVALID
    return EXIT_NUMERICAL


def _error_record(exc: BaseException) -> dict:
    record = {"type": type(exc).__name__, "message": str(exc), "exit_code": _exit_code(exc)}
    for attr in ("field", "t", "step"):
        value = getattr(exc, attr, None)
        if value is not None:
            record[attr] = value
    return record


class Manifest:
    """Mutable manifest document, flushed to disk by :meth:`write`."""

    def __init__(self, run_dir: Path, config_digest: str, command: str):
        self.path = run_dir / MANIFEST_FILE
        self.doc = {
            "config_digest": config_digest,
            "version": __version__,
            "command": command,
            "started": _now(),
            "finished": None,
            "files": [],
            "verdicts": {},
            "status": "running",
        }

    @classmethod
    def load(cls, run_dir: Path, command: str) -> "Manifest":
        self = cls.__new__(cls)
        self.path = run_dir / MANIFEST_FILE
        self.doc = json.loads(self.path.read_text(encoding="utf-8"))
        self.doc.update(command=command, started=_now(), finished=None, status="running")
        self.doc.pop("error", None)
        return self

    def add_file(self, path: Path) -> None:
        name = path.name
        if name not in self.doc["files"]:
            self.doc["files"].append(name)
            self.doc["files"].sort()

    def fail(self, exc: BaseException) -> None:
        self.doc["status"] = "failed"
        self.doc["error"] = _error_record(exc)

    def write(self) -> None:
        if self.doc["status"] == "running":
            self.doc["status"] = "ok"
        self.doc["finished"] = _now()
        self.add_file(self.path)
        export.write_json(self.path, self.doc)


def _report_error(exc: BaseException) -> int:
    code = _exit_code(exc)
    print(f"error: {exc}", file=sys.stderr)
    return code


def _prepare_run_dir(doc: dict, config_path: Path, out: Optional[str], subdir: str = "") -> Path:
    root = Path(out or doc.get("output_dir") or DEFAULT_ROOT)
    run_dir = root / digest(doc)
    if subdir:
        run_dir = run_dir / subdir
    run_dir.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(config_path, run_dir / CONFIG_FILE)
    return run_dir


# -- run -----------------------------------------------------------------------------------


def execute_run(cfg: ScenarioConfig, run_dir: Path, manifest: Manifest) -> None:
    metric_traj = run_forward(cfg)
    traj = metric_traj
    if cfg.equation is EquationKind.CONJUGATE:
        manifest.add_file(export.write_trajectory_csv(run_dir / METRIC_CSV, metric_traj))
        traj = run_conjugate(metric_traj, terminal_data(cfg))
        manifest.doc["mass_drift"] = mass_drift(traj)
        manifest.doc["interpolation_order"] = traj.interpolation_order
    manifest.add_file(export.write_trajectory_csv(run_dir / TRAJECTORY_CSV, traj))
    manifest.add_file(export.save_trajectory(run_dir / TRAJECTORY_STORE, traj))
    manifest.doc.update(
        truncated=traj.truncated,
        hypothesis_violated=traj.hypothesis_violated,
        steps=len(traj) - 1,
        terminal_time=float(metric_traj.times[-1]),
        min_R=float(traj.min_R.min()),
    )
    if traj.truncated:
        log.warning("run truncated by the extinction guard at t=%.6g", metric_traj.times[-1])


def cmd_run(config_path: str, out: Optional[str] = None) -> int:
    path = Path(config_path)
    try:
        doc = export.load_config_document(path)
    except ConfigError as exc:
        return _report_error(exc)
    run_dir = _prepare_run_dir(doc, path, out)
    manifest = Manifest(run_dir, digest(doc), "run")
    manifest.add_file(run_dir / CONFIG_FILE)
    code = EXIT_OK
    try:
        cfg = ScenarioConfig.from_dict(doc)
        execute_run(cfg, run_dir, manifest)
    except HarnackLabError as exc:
        manifest.fail(exc)
        code = _report_error(exc)
    except Exception as exc:  # still leave a manifest behind
        manifest.fail(exc)
        log.exception("unexpected failure")
        code = EXIT_NUMERICAL
    manifest.write()
    if code == EXIT_OK:
        print(run_dir)
    return code


# -- verify --------------------------------------------------------------------------------


def parse_tolerances(values: Sequence[str]) -> tuple[Optional[float], dict]:
    """``--tolerance 1e-5`` sets a global value; ``--tolerance thm_1_1=1e-5`` one theorem."""
    default, per_theorem = None, {}
    for raw in values or ():
        key, sep, number = raw.partition("=")
        try:
            if sep:
                if key not in THEOREMS:
                    raise InvalidParameter(f"--tolerance: unknown theorem id {key!r}")
                per_theorem[key] = float(number)
            else:
                default = float(raw)
        except ValueError:
            raise InvalidParameter(f"--tolerance: cannot parse {raw!r}") from None
    for value in [default, *per_theorem.values()]:
        if value is not None and not value >= 0:
            raise InvalidParameter("--tolerance must be nonnegative")
    return default, per_theorem


def verify_one(traj, theorem: str, tolerance: Optional[float], queries: list, run_dir: Path, manifest: Manifest) -> str:
    if theorem == "corollary_2_3":
        qs = [PathQuery(**q) for q in queries] if queries else default_queries(traj)
        report = verify_integrated_harnack(traj, qs, tolerance)
        manifest.add_file(export.write_json(run_dir / f"paths_{theorem}.json", export.path_documents(report)))
    else:
        report = verify_theorem(traj, theorem, tolerance)
    series = export.write_series_csv(run_dir / f"series_{theorem}.csv", report)
    doc = export.report_document(report, series.name)
    manifest.add_file(series)
    manifest.add_file(export.write_json(run_dir / f"report_{theorem}.json", doc))
    manifest.doc["verdicts"][theorem] = report.verdict
    print(f"{theorem}: {report.verdict} (max_violation={report.max_violation:.6g}, tolerance={report.tolerance:.3g})")
    return report.verdict


def cmd_verify(run_dir: str, theorems: Sequence[str] = (), tolerances: Sequence[str] = ()) -> int:
    run_dir = Path(run_dir)
    store = run_dir / TRAJECTORY_STORE
    if not (run_dir / MANIFEST_FILE).is_file() or not store.is_file():
        return _report_error(ValidationError(f"{run_dir} has no completed manifest and trajectory"))
    manifest = Manifest.load(run_dir, "verify")
    code = EXIT_OK
    try:
        if manifest.doc.get("status") == "failed":
            raise ValidationError(f"{run_dir} holds a failed run")
        default_tol, per_theorem = parse_tolerances(tolerances)
        doc = export.load_config_document(run_dir / CONFIG_FILE)
        ids = list(theorems) or list(doc.get("theorems", ()))
        if not ids:
            raise InvalidParameter("no theorem ids given (use --theorem or the config's theorems list)")
        for th in ids:
            if th not in THEOREMS:
                raise InvalidParameter(f"unknown theorem id {th!r}; expected one of {', '.join(THEOREMS)}")
        traj = export.load_trajectory(store)
        for th in ids:
            tol = per_theorem.get(th, default_tol)
            if verify_one(traj, th, tol, doc.get("path_queries", []), run_dir, manifest) == FAIL:
                code = EXIT_VERDICT
    except HarnackLabError as exc:
        manifest.fail(exc)
        code = _report_error(exc)
    except Exception as exc:
        manifest.fail(exc)
        log.exception("unexpected failure")
        code = EXIT_NUMERICAL
    manifest.write()
    return code


# -- sweep ---------------------------------------------------------------------------------


def parse_resolutions(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.replace(" ", "").split(",") if part]
    except ValueError:
        raise ResolutionError(f"--resolutions: expected comma-separated integers, got {text!r}") from None
    if len(values) < 2:
        raise ResolutionError("--resolutions needs at least two values")
    if any(v < MIN_NODES for v in values):
        raise ResolutionError(f"every resolution must be >= {MIN_NODES}")
    if len(set(values)) != len(values):
        raise ResolutionError("resolutions must be distinct")
    return values


def mid_window(traj) -> float:
    """Stamp-level midpoint of the monitored window (``tau`` for conjugate runs)."""
    if traj.is_conjugate:
        return 0.5 * float(traj.times[-1])
    return 0.5 * (traj.t_min + float(traj.times[-1]))


def convergence_row(cfg: ScenarioConfig) -> dict:
    traj = run_forward(cfg)
    row = {"N": cfg.N, "residual_H": None, "residual_P": None, "mass_drift": None}
    if cfg.equation is EquationKind.CONJUGATE:
        traj = run_conjugate(traj, terminal_data(cfg))
        row["residual_P"] = evolution_residual_P(traj, mid_window(traj))
        row["mass_drift"] = mass_drift(traj)
    else:
        row["residual_H"] = evolution_residual_H(traj, mid_window(traj))
    return row


def cmd_sweep(config_path: str, resolutions: str, out: Optional[str] = None) -> int:
    path = Path(config_path)
    try:
        doc = export.load_config_document(path)
        Ns = parse_resolutions(resolutions or "")
    except ValidationError as exc:
        return _report_error(exc)
    run_dir = _prepare_run_dir(doc, path, out, "sweep")
    manifest = Manifest(run_dir, digest(doc), "sweep")
    manifest.add_file(run_dir / CONFIG_FILE)
    manifest.doc["resolutions"] = Ns
    code = EXIT_OK
    try:
        base = ScenarioConfig.from_dict(doc)
        rows = []
        for N in Ns:
            started = time.perf_counter()
            rows.append(convergence_row(base.with_resolution(N)))
            log.info("N=%d done in %.2fs", N, time.perf_counter() - started)
        orders = {key: empirical_orders(Ns, [r[key] for r in rows]) for key in ("residual_H", "residual_P", "mass_drift")}
        manifest.add_file(export.write_convergence_csv(run_dir / CONVERGENCE_CSV, rows, orders))
    except HarnackLabError as exc:
        manifest.fail(exc)
        code = _report_error(exc)
    except Exception as exc:
        manifest.fail(exc)
        log.exception("unexpected failure")
        code = EXIT_NUMERICAL
    manifest.write()
    if code == EXIT_OK:
        print(run_dir / CONVERGENCE_CSV)
    return code


# -- entry point ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harnacklab", description="Harnack-inequality checks along Ricci-flow runs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="integrate a scenario and store its trajectory")
    run.add_argument("--config", required=True, help="scenario JSON file")
    run.add_argument("--out", help="root directory for run folders (default: config output_dir or ./runs)")

    verify = sub.add_parser("verify", help="check theorems against a stored run")
    verify.add_argument("run_dir", nargs="?", help="run folder produced by 'run'")
    verify.add_argument("--out", dest="out", help="run folder (alternative to the positional argument)")
    verify.add_argument("--theorem", action="append", default=[], help="theorem id; repeat for several")
    verify.add_argument("--tolerance", action="append", default=[], help="VALUE or THEOREM=VALUE")

    sweep = sub.add_parser("sweep", help="residual and mass-drift convergence study")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--resolutions", required=True, help="comma-separated grid sizes, e.g. 32,64,128")
    sweep.add_argument("--out")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return cmd_run(args.config, args.out)
    if args.command == "verify":
        target = args.run_dir or args.out
        if target is None:
            return _report_error(ValidationError("verify needs a run folder"))
        return cmd_verify(target, args.theorem, args.tolerance)
    return cmd_sweep(args.config, args.resolutions, args.out)


if __name__ == "__main__":
    sys.exit(main())
