"""Report figures rendered next to the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Circle, Rectangle  # noqa: E402

# no timestamps or version strings, so repeated runs give identical files
_META = {"Software": None}
MODE_COLORS = {"MAPPED": "tab:olive", "DIRECT": "tab:blue", "PERTURBED": "tab:red", "BASELINE": "tab:gray"}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def _box(ax, b, **kw):
    ax.add_patch(Rectangle((b.v_min, b.omega_min), b.v_max - b.v_min, b.omega_max - b.omega_min, fill=False, **kw))


def run_figures(result, out: Path) -> dict:
    s = result.scenario
    rec = result.records
    paths = {}
    t = np.array([r["t"] for r in rec])
    xy = np.array([[r["x"], r["y"]] for r in rec]).reshape(-1, 2)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(s.waypoints[:, 0], s.waypoints[:, 1], "k--", lw=1, label="desired path")
    if len(xy):
        ax.plot(xy[:, 0], xy[:, 1], "-", color="tab:orange", lw=1.5, label=f"{result.policy} learner")
    for o in s.obstacles:
        ax.add_patch(Circle(o.center, o.radius, color="0.4", alpha=0.6))
    if s.toggle_off_at is not None and len(t):
        k = int(np.searchsorted(t, s.toggle_off_at))
        if k < len(xy):
            ax.plot(*xy[k], "rx", ms=8, label="transfer off")
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.legend(loc="best", fontsize=8)
    paths["fig_trajectory"] = _save(fig, out / "trajectory.png")

    fig, ax = plt.subplots(figsize=(7, 3))
    ax.plot(t, [r["deviation"] for r in rec], color="tab:orange")
    if s.toggle_off_at is not None:
        ax.axvline(s.toggle_off_at, color="r", ls=":")
    ax.set_xlabel("t (s)")
    ax.set_ylabel("deviation (m)")
    fig.tight_layout()
    paths["fig_deviation"] = _save(fig, out / "deviation.png")

    if result.store is not None:
        pairs = result.store.refined_pairs
        fig, (a0, a1) = plt.subplots(1, 2, figsize=(9, 4))
        if pairs:
            te = np.array([[p.teacher_equiv.v, p.teacher_equiv.omega] for p in pairs])
            lc = np.array([[p.learner_cmd.v, p.learner_cmd.omega] for p in pairs])
            a0.scatter(te[:, 0], te[:, 1], s=8, c="tab:blue")
            a1.scatter(lc[:, 0], lc[:, 1], s=8, c="tab:blue")
        _box(a0, s.teacher_bounds, ec="k", ls="--")
        _box(a0, result.limits.teacher_box, ec="r")
        _box(a1, s.learner.bounds, ec="k", ls="--")
        a0.set_title("teacher domain")
        a1.set_title("learner domain")
        for a in (a0, a1):
            a.set_xlabel("v (m/s)")
            a.set_ylabel("omega (rad/s)")
            a.autoscale_view()
        fig.tight_layout()
        paths["fig_pairs"] = _save(fig, out / "command_pairs.png")
    return paths


def grid_figures(rows, out: Path) -> dict:
    if not rows:
        return {}
    n = max(r["i"] for r in rows) + 1
    m = max(r["j"] for r in rows) + 1
    modes = ["MAPPED", "DIRECT", "PERTURBED"]
    code = np.zeros((n, m))
    fields = ("pos_err_scm", "pos_err_baseline", "orient_err_scm", "orient_err_baseline")
    grids = {f: np.zeros((n, m)) for f in fields}
    for r in rows:
        code[r["i"], r["j"]] = modes.index(r["mode"]) if r["mode"] in modes else -1
        for f in fields:
            grids[f][r["i"], r["j"]] = r[f]
    fig, axes = plt.subplots(1, 5, figsize=(16, 3.4))
    cmap = matplotlib.colors.ListedColormap([MODE_COLORS[k] for k in modes])
    axes[0].imshow(code.T, origin="lower", extent=(0, 1, 0, 1), cmap=cmap, vmin=-0.5, vmax=2.5)
    axes[0].set_title("mode")
    for ax, f in zip(axes[1:], fields):
        pair = "pos" if f.startswith("pos") else "orient"
        vmax = max(grids[f"{pair}_err_scm"].max(), grids[f"{pair}_err_baseline"].max()) or 1.0
        im = ax.imshow(grids[f].T, origin="lower", extent=(0, 1, 0, 1), vmin=0.0, vmax=vmax, cmap="viridis")
        ax.set_title(f.replace("_", " "))
        fig.colorbar(im, ax=ax, fraction=0.046)
    for ax in axes:
        ax.set_xlabel("normalized v")
    axes[0].set_ylabel("normalized omega")
    fig.tight_layout()
    return {"fig_grid": _save(fig, out / "grid_error_map.png")}
