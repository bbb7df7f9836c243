"""Command-line entry point: simulate, grid-error-map, scm-selftest, replay-metrics."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .errors import ConfigError, ScmTransferError
from .geometry import Polygon2, is_simple_polygon

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2
log = logging.getLogger("scm_transfer")


def _random_quad(rng) -> np.ndarray:
    base = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    while True:
        q = base + rng.uniform(-0.3, 0.3, (4, 2))
        p = Polygon2(q)
        if p.is_ccw and is_simple_polygon(p):
            return q


def _seg_dist(z: complex, a: complex, b: complex) -> float:
    d = b - a
    s = min(1.0, max(0.0, ((z - a) * d.conjugate()).real / abs(d) ** 2))
    return abs(z - (a + s * d))


def scm_selftest(trials: int = 20, seed: int = 0, points: int = 50) -> dict:
    """Residual statistics of the rectangle map on random convex-ish quadrilaterals."""
    from .scm import build_rectangle_map, strip_to_polygon

    rng = np.random.default_rng(seed)
    side, vert, trip, failures = [], [], [], 0
    for _ in range(trials):
        poly = Polygon2(_random_quad(rng))
        try:
            m = build_rectangle_map(poly)
        except ScmTransferError:
            failures += 1
            continue
        side.append(float(m.strip_params.side_residual))
        # points on the strip edges must land on the matching polygon sides
        sp = m.strip_params
        w = sp.target_complex
        x = np.linspace(0.05, 0.95, 7) * sp.gap
        lo = np.asarray(strip_to_polygon(sp, x + 0j))
        hi = np.asarray(strip_to_polygon(sp, x + 1j))
        vert.append(max(max(_seg_dist(z, w[0], w[1]) for z in lo), max(_seg_dist(z, w[2], w[3]) for z in hi)))
        for _ in range(points):
            s = complex(*rng.uniform(0.02, 0.98, 2))
            trip.append(abs(m.to_square(m.from_square(s)) - s))

    def stats(a):
        if not a:
            return {"max": None, "median": None}
        return {"max": float(np.max(a)), "median": float(np.median(a))}

    return {
        "trials": trials,
        "failures": failures,
        "side_length_residual": stats(side),
        "side_error": stats(vert),
        "round_trip_error": stats(trip),
    }


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="scm-transfer", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    sim = sub.add_parser("simulate", help="run one closed-loop scenario and write its outputs")
    sim.add_argument("--config", required=True, help="scenario file or preset name")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", required=True)
    sim.add_argument("--policy", choices=("scm", "direct", "ideal"))
    sim.add_argument("--toggle-off-at", type=float)
    sim.add_argument("--no-figures", action="store_true")

    grid = sub.add_parser("grid-error-map", help="0.1 s error table over a dense teacher command grid")
    grid.add_argument("--config", required=True)
    grid.add_argument("--pairs", required=True, help="pairs.json written by simulate")
    grid.add_argument("--resolution", type=int, default=31)
    grid.add_argument("--out", required=True)
    grid.add_argument("--no-figures", action="store_true")

    st = sub.add_parser("scm-selftest", help="residual statistics of the conformal map")
    st.add_argument("--trials", type=int, default=20)
    st.add_argument("--seed", type=int, default=0)

    rp = sub.add_parser("replay-metrics", help="recompute metrics from a trajectory file")
    rp.add_argument("--trajectory", required=True)
    rp.add_argument("--config", help="scenario file (default: scenario.yaml next to the trajectory)")
    return ap


def _simulate(a) -> int:
    from .harness.export import write_run
    from .harness.runner import run_scenario
    from .harness.scenario import load_scenario

    s = load_scenario(a.config).with_overrides(seed=a.seed, policy=a.policy, toggle_off_at=a.toggle_off_at)
    res = run_scenario(s)
    paths = write_run(res, a.out, figures=not a.no_figures)
    print(json.dumps(res.metrics.to_dict(), sort_keys=True))
    log.info("wrote %s", ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


def _grid(a) -> int:
    from .harness.export import load_pairs, write_grid_error_map
    from .harness.runner import grid_error_summary, run_grid_error_map
    from .harness.scenario import load_scenario

    s = load_scenario(a.config)
    try:
        store, limits = load_pairs(a.pairs)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad pair snapshot: {exc}") from exc
    rows = run_grid_error_map(s, store, limits, a.resolution)
    summary = grid_error_summary(rows)
    write_grid_error_map(rows, summary, a.out, figures=not a.no_figures)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _replay(a) -> int:
    from .harness.export import read_trajectory, replay_metrics
    from .harness.scenario import load_scenario

    cfg = a.config or str(Path(a.trajectory).with_name("scenario.yaml"))
    s = load_scenario(cfg)
    try:
        records = read_trajectory(a.trajectory)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(json.dumps(replay_metrics(records, s), sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    a = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not a.verbose:
        warnings.simplefilter("ignore")
    try:
        if a.cmd == "simulate":
            return _simulate(a)
        if a.cmd == "grid-error-map":
            return _grid(a)
        if a.cmd == "scm-selftest":
            print(json.dumps(scm_selftest(a.trials, a.seed), sort_keys=True))
            return EXIT_OK
        return _replay(a)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
