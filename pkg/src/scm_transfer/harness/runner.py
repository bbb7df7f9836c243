"""Closed-loop simulation of teacher planners driving a learner through the transfer layer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import InconsistentMotion, Infeasible
from ..mpc import mpc_step
from ..path import Polyline
from ..primitives import command_lattice, generate_library, plan_local, plan_polyline, prune_library, replan_trigger
from ..transfer import (
    BASELINE,
    DIRECT,
    LearnerLimits,
    PairStore,
    TransferContext,
    boundary_hull,
    is_limit_outlier,
    record_observation,
    transfer,
    update_limits,
)
from ..vehicle import Command, CommandBounds, LearnerSpec, Pose, denormalize_command, step_learner, step_teacher
from .scenario import Scenario

TRAJECTORY_HEADER = ("t", "x", "y", "theta", "v_teacher", "omega_teacher", "v_learner", "omega_learner", "mode", "deviation")


@dataclass
class RunMetrics:
    max_deviation: float
    mean_deviation: float
    completion_time: Optional[float]
    goal_reached: bool
    collision: bool
    steps: int
    sim_time: float
    mode_counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "max_deviation": self.max_deviation,
            "mean_deviation": self.mean_deviation,
            "completion_time": self.completion_time,
            "goal_reached": self.goal_reached,
            "collision": self.collision,
            "steps": self.steps,
            "sim_time": self.sim_time,
            "mode_counts": dict(sorted(self.mode_counts.items())),
        }


@dataclass
class RunResult:
    scenario: Scenario
    policy: str
    records: list
    metrics: RunMetrics
    store: Optional[PairStore]
    limits: LearnerLimits
    diagnostics: dict = field(default_factory=dict)


def ground_truth_box(spec: LearnerSpec, samples: int = 201) -> CommandBounds:
    """Teacher-domain range the learner actually realizes over its whole command box."""
    g = np.linspace(0.0, 1.0, samples)
    b = spec.bounds
    v = [spec.effective_command(denormalize_command([a, 0.5], b)).v for a in g]
    w = [spec.effective_command(denormalize_command([0.5, a], b)).omega for a in g]
    return CommandBounds(min(v), max(v), min(w), max(w))


def compute_metrics(records, obstacles, goal, goal_tolerance: float, dt: float) -> RunMetrics:
    """Metrics from trajectory rows alone (also used when replaying exported files)."""
    if not records:
        return RunMetrics(0.0, 0.0, None, False, False, 0, 0.0, {})
    dev = [r["deviation"] for r in records]
    collision = any(
        math.hypot(r["x"] - o.center[0], r["y"] - o.center[1]) <= o.radius for r in records for o in obstacles
    )
    last = records[-1]
    reached = (not collision) and math.hypot(last["x"] - goal[0], last["y"] - goal[1]) <= goal_tolerance
    counts: dict = {}
    for r in records:
        counts[r["mode"]] = counts.get(r["mode"], 0) + 1
    return RunMetrics(
        max_deviation=max(dev),
        mean_deviation=sum(dev) / len(dev),
        completion_time=last["t"] if reached else None,
        goal_reached=reached,
        collision=collision,
        steps=len(records),
        sim_time=last["t"],
        mode_counts=counts,
    )


class _Loop:
    """State shared by both planner modes."""

    def __init__(self, s: Scenario, policy: str, rng, store=None, limits=None):
        self.s = s
        self.policy = policy
        self.rng = rng
        self.path = Polyline(s.waypoints)
        self.goal = self.path.goal
        self.records: list = []
        self.ctx = TransferContext()
        if store is not None:
            self.store = PairStore.from_dict(store.to_dict())
        else:
            self.store = PairStore(s.learner.bounds, s.teacher_bounds, s.grid[0], s.grid[1], s.k_min)
        self.truth = ground_truth_box(s.learner)
        if policy == "ideal":
            self.limits = LearnerLimits(self.truth)
        elif limits is not None:
            self.limits = limits
        else:
            self.limits = LearnerLimits.initial(s.teacher_bounds)
        self.teacher_limits = LearnerLimits.initial(s.teacher_bounds)
        self.diag = {"infeasible": 0, "scm_failures": 0, "inconsistent": 0}
        self.done = False
        self.collided = False
        self.reached = False

    # -- transfer layer -------------------------------------------------
    def active(self, t: float) -> bool:
        """Whether the transfer framework is on at time t."""
        if self.policy != "scm":
            return False
        return self.s.toggle_off_at is None or t < self.s.toggle_off_at

    def planning_limits(self, t: float) -> LearnerLimits:
        if self.policy == "ideal" or self.active(t):
            return self.limits
        return self.teacher_limits

    def to_learner(self, u_T: Command, t: float):
        if self.policy == "ideal":
            return u_T, DIRECT
        if not self.active(t):
            return self.s.learner.bounds.clamp(u_T), BASELINE
        out = transfer(self.store, self.limits, u_T, self.ctx)
        if any(f.startswith("scm_failure") for f in out.flags):
            self.diag["scm_failures"] += 1
        return self.s.learner.bounds.clamp(out.learner_cmd), out.mode

    def move(self, pose: Pose, u_L: Command) -> Pose:
        if self.policy == "ideal":
            return step_teacher(pose, u_L, self.s.dt)
        return step_learner(pose, u_L, self.s.learner, self.rng)

    def observe(self, u_L, p0, p1, steps: int, t: float, update: bool = True):
        sigma = self.s.learner.noise_sigma * math.sqrt(steps)
        try:
            pair = record_observation(self.store, u_L, p0, p1, self.s.dt, steps, sigma)
        except InconsistentMotion:
            self.diag["inconsistent"] += 1
            return
        if pair is not None and update:
            # only outliers reach the limit update: boundary pairs, or pairs outside the current box
            on_bound, outside = is_limit_outlier(pair, self.limits, self.s.learner.bounds)
            if on_bound or outside:
                others = [p for p in self.store.refined_pairs if p.key != pair.key]
                self.limits = update_limits(
                    self.limits, pair, self.s.learner.bounds, self.s.teacher_bounds, None, others, t, outside
                )

    # -- bookkeeping ----------------------------------------------------
    def record(self, t, pose: Pose, u_T: Command, u_L: Command, mode: str):
        self.records.append(
            {
                "t": t,
                "x": pose.x,
                "y": pose.y,
                "theta": pose.theta,
                "v_teacher": u_T.v,
                "omega_teacher": u_T.omega,
                "v_learner": u_L.v,
                "omega_learner": u_L.omega,
                "mode": mode,
                "deviation": self.path.distance((pose.x, pose.y)),
            }
        )
        if any(math.hypot(pose.x - o.center[0], pose.y - o.center[1]) <= o.radius for o in self.s.obstacles):
            self.collided = True
            self.done = True
        elif math.hypot(pose.x - self.goal[0], pose.y - self.goal[1]) <= self.s.goal_tolerance:
            self.reached = True
            self.done = True
        elif t >= self.s.max_sim_time - 1e-9:
            self.done = True

    def calibrate(self):
        """Drive lattice commands (learner bounds included) before the task and learn pairs and limits."""
        cal = self.s.calibration
        if cal is None or self.policy != "scm":
            return
        rows, cols = cal.grid
        nodes = [
            (i / (rows - 1) if rows > 1 else 0.5, j / (cols - 1) if cols > 1 else 0.5)
            for i in range(rows)
            for j in range(cols)
        ]
        pose = Pose(0.0, 0.0, 0.0)
        steps = 0
        for _ in range(cal.repeats):
            for n in nodes:
                if cal.max_steps is not None and steps >= cal.max_steps:
                    break
                u_L = denormalize_command(n, self.s.learner.bounds)
                p0 = pose
                for _ in range(cal.hold_steps):
                    pose = step_learner(pose, u_L, self.s.learner, self.rng)
                steps += 1
                self.observe(u_L, p0, pose, cal.hold_steps, 0.0)
                # keep the calibration drive bounded
                if abs(pose.x) > 50 or abs(pose.y) > 50:
                    pose = Pose(0.0, 0.0, pose.theta)
        hull = boundary_hull(self.store.refined_pairs, self.s.learner.bounds)
        self.limits = LearnerLimits(self.limits.teacher_box, hull, self.limits.edge_sources, self.limits.history)


def _run_mpc(loop: _Loop):
    s = loop.s
    pose = s.start
    prev_solution = None
    prev_cmd = None
    scale, n_explore = s.exploration_spacing
    cold = len(loop.store.refined) == 0 and loop.policy == "scm"
    n_steps = int(round(s.max_sim_time / s.dt))
    for k in range(n_steps):
        t = k * s.dt
        lim = loop.planning_limits(t)
        cfg = s.mpc_config(lim.teacher_box)
        spacing = scale if (cold and k < n_explore) else 1.0
        try:
            u_T, _, prev_solution = mpc_step(pose, loop.path, s.obstacles, cfg, lim, prev_solution, spacing, prev_cmd)
        except Infeasible:
            loop.diag["infeasible"] += 1
            u_T = lim.teacher_box.clamp(Command(0.0, 0.0))
            prev_solution = None
        prev_cmd = u_T.as_array()
        u_L, mode = loop.to_learner(u_T, t)
        new_pose = loop.move(pose, u_L)
        if loop.active(t):
            loop.observe(u_L, pose, new_pose, 1, t + s.dt)
        pose = new_pose
        loop.record(round(t + s.dt, 10), pose, u_T, u_L, mode)
        if loop.done:
            break


def _run_primitive(loop: _Loop):
    s = loop.s
    cfg = s.planner
    lib = generate_library(command_lattice(s.teacher_bounds, *s.lattice), s.dt, cfg.duration)
    if loop.policy == "scm":
        lib = prune_library(lib, loop.limits)
    elif loop.policy == "ideal":
        lib = prune_library(lib, loop.limits)
    n_sub = len(lib.primitives[0].states) - 1
    pose = s.start
    k = 0
    n_steps = int(round(s.max_sim_time / s.dt))
    while k < n_steps and not loop.done:
        plan, _ = plan_local(lib, loop.path, pose, cfg)
        poly = plan_polyline(plan, pose)
        for prim in plan:
            t0 = k * s.dt
            u_T = prim.command
            u_L, mode = loop.to_learner(u_T, t0)
            p_start = pose
            aborted = False
            for _ in range(n_sub):
                pose = loop.move(pose, u_L)
                k += 1
                loop.record(round(k * s.dt, 10), pose, u_T, u_L, mode)
                if loop.done or k >= n_steps:
                    aborted = True
                    break
                if replan_trigger(pose, poly, s.obstacles, cfg):
                    aborted = True
                    break
            if not aborted and loop.active(t0):
                # limits are calibrated beforehand in this mode; pairs keep refining the map
                loop.observe(u_L, p_start, pose, n_sub, k * s.dt, update=False)
            if aborted:
                break


def run_scenario(s: Scenario, policy: Optional[str] = None, store=None, limits=None) -> RunResult:
    """Run one closed-loop episode; deterministic for a fixed scenario seed.

    ``store`` / ``limits`` seed the scm learner with pairs from an earlier run.
    """
    policy = policy or s.policy
    rng = np.random.default_rng(s.seed)
    loop = _Loop(s, policy, rng, store, limits)
    loop.calibrate()
    if s.mode == "mpc":
        _run_mpc(loop)
    else:
        _run_primitive(loop)
    metrics = compute_metrics(loop.records, s.obstacles, loop.goal, s.goal_tolerance, s.dt)
    diag = dict(loop.diag)
    diag["store"] = dict(loop.store.diagnostics)
    return RunResult(s, policy, loop.records, metrics, loop.store if policy == "scm" else None, loop.limits, diag)


# ---------------------------------------------------------------------------
# grid error map


def run_grid_error_map(s: Scenario, store: PairStore, limits: LearnerLimits, resolution: int = 31) -> list:
    """Teacher, baseline learner and scm learner driven 0.1 s from the same pose for a grid of teacher commands.

    Rollouts are noise-free so the table isolates the command mismatch.
    """
    from ..errors import ConfigError

    if resolution < 2:
        raise ConfigError("resolution must be at least 2")
    spec = s.learner
    quiet = LearnerSpec(spec.bounds, spec.warp_v, spec.warp_omega, 0.0, spec.dt, spec.effective_bounds)
    box = limits.teacher_box
    ctx = TransferContext()
    p0 = Pose(0.0, 0.0, 0.0)
    rows = []
    for i, a in enumerate(np.linspace(0.0, 1.0, resolution)):
        for j, b in enumerate(np.linspace(0.0, 1.0, resolution)):
            u_T = denormalize_command([a, b], box)
            ideal = step_teacher(p0, u_T, spec.dt)
            base = step_learner(p0, spec.bounds.clamp(u_T), quiet)
            out = transfer(store, limits, u_T, ctx)
            scm = step_learner(p0, spec.bounds.clamp(out.learner_cmd), quiet)

            def errs(q):
                dpos = math.hypot(q.x - ideal.x, q.y - ideal.y)
                dth = abs(math.remainder(q.theta - ideal.theta, 2 * math.pi))
                return dpos, dth

            ps, os_ = errs(scm)
            pb, ob = errs(base)
            rows.append(
                {
                    "i": i,
                    "j": j,
                    "v_teacher": u_T.v,
                    "omega_teacher": u_T.omega,
                    "mode": out.mode,
                    "pos_err_scm": ps,
                    "orient_err_scm": os_,
                    "pos_err_baseline": pb,
                    "orient_err_baseline": ob,
                }
            )
    return rows


def grid_error_summary(rows) -> dict:
    mapped = [r for r in rows if r["mode"] == "MAPPED"]
    out = {"cells": len(rows), "mapped_cells": len(mapped)}
    for mode in ("MAPPED", "DIRECT", "PERTURBED"):
        out[f"count_{mode.lower()}"] = sum(1 for r in rows if r["mode"] == mode)
    if mapped:
        better = sum(1 for r in mapped if r["pos_err_scm"] < r["pos_err_baseline"])
        out["fraction_pos_better"] = better / len(mapped)
        out["median_orient_scm"] = float(np.median([r["orient_err_scm"] for r in mapped]))
        out["median_orient_baseline"] = float(np.median([r["orient_err_baseline"] for r in mapped]))
        out["median_pos_scm"] = float(np.median([r["pos_err_scm"] for r in mapped]))
        out["median_pos_baseline"] = float(np.median([r["pos_err_baseline"] for r in mapped]))
    return out
