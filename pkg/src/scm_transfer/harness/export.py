"""Run outputs: trajectory CSV, pair snapshot, limit history, metrics and the scenario copy."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import yaml

from ..path import Polyline
from ..transfer import LearnerLimits, PairStore
from .runner import TRAJECTORY_HEADER, RunResult, compute_metrics
from .scenario import Scenario

GRID_HEADER = (
    "i",
    "j",
    "v_teacher",
    "omega_teacher",
    "mode",
    "pos_err_scm",
    "orient_err_scm",
    "pos_err_baseline",
    "orient_err_baseline",
)


def _fmt(x) -> str:
    # repr is the shortest string that round-trips, so replayed metrics match exactly
    if isinstance(x, float):
        return repr(float(x))
    return str(x)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in header])


def write_trajectory(path, records) -> None:
    _write_csv(Path(path), TRAJECTORY_HEADER, records)


def read_trajectory(path) -> list:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader, ()))
        if header != TRAJECTORY_HEADER:
            raise ValueError(f"unexpected trajectory header {header}")
        out = []
        for row in reader:
            rec = dict(zip(header, row))
            for k in header:
                if k != "mode":
                    rec[k] = float(rec[k])
            out.append(rec)
    return out


def metrics_document(result: RunResult) -> dict:
    s = result.scenario
    doc = result.metrics.to_dict()
    doc.update(
        {
            "scenario": s.name,
            "policy": result.policy,
            "seed": s.seed,
            "toggle_off_at": s.toggle_off_at,
            "learned_box": result.limits.teacher_box.as_list(),
        }
    )
    return doc


def pairs_document(store: PairStore, limits: LearnerLimits) -> dict:
    doc = store.to_dict()
    doc["limits"] = limits.to_dict()
    return doc


def load_pairs(path):
    """Read a pair snapshot; returns (store, limits)."""
    d = json.loads(Path(path).read_text())
    store = PairStore.from_dict(d)
    limits = LearnerLimits.from_dict(d["limits"]) if d.get("limits") else LearnerLimits.initial(store.teacher_bounds)
    return store, limits


def write_run(result: RunResult, out_dir, figures: bool = True) -> dict:
    """Write every output of one run into ``out_dir``; returns name -> path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectory": out / "trajectory.csv",
        "metrics": out / "metrics.json",
        "limits_history": out / "limits_history.json",
        "scenario": out / "scenario.yaml",
    }
    write_trajectory(paths["trajectory"], result.records)
    _write_json(paths["metrics"], metrics_document(result))
    _write_json(paths["limits_history"], [h.to_dict() for h in result.limits.history])
    paths["scenario"].write_text(yaml.safe_dump(result.scenario.raw, sort_keys=False))
    if result.store is not None:
        paths["pairs"] = out / "pairs.json"
        _write_json(paths["pairs"], pairs_document(result.store, result.limits))
    if figures:
        from . import plotting

        paths.update(plotting.run_figures(result, out))
    return paths


def write_grid_error_map(rows, summary: dict, out_dir, figures: bool = True) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"grid": out / "grid_error_map.csv", "summary": out / "grid_error_summary.json"}
    _write_csv(paths["grid"], GRID_HEADER, rows)
    _write_json(paths["summary"], summary)
    if figures:
        from . import plotting

        paths.update(plotting.grid_figures(rows, out))
    return paths


def replay_metrics(records, s: Scenario) -> dict:
    """Metrics recomputed from trajectory rows and the scenario geometry."""
    path = Polyline(s.waypoints)
    for r in records:
        if not math.isfinite(r["deviation"]):
            raise ValueError("non-finite deviation in trajectory")
    return compute_metrics(records, s.obstacles, path.goal, s.goal_tolerance, s.dt).to_dict()
