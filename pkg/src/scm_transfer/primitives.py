"""Motion-primitive library, pruning, DTW-cost selection and event-triggered replanning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyLibrary
from .path import Polyline, polyline_distance
from .vehicle import Command, CommandBounds, Pose, step_teacher, wrap_angle


@dataclass(frozen=True)
class MotionPrimitive:
    command: Command
    duration: float
    dt: float
    states: np.ndarray  # (n, 3) poses in the primitive's own frame, first row = origin

    @property
    def path_length(self) -> float:
        d = np.diff(self.states[:, :2], axis=0)
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    @property
    def end_pose(self) -> np.ndarray:
        return self.states[-1]

    def in_frame(self, pose: Pose) -> np.ndarray:
        """States expressed in the world frame of ``pose``."""
        c, s = math.cos(pose.theta), math.sin(pose.theta)
        x, y = self.states[:, 0], self.states[:, 1]
        out = np.empty_like(self.states)
        out[:, 0] = pose.x + c * x - s * y
        out[:, 1] = pose.y + s * x + c * y
        out[:, 2] = wrap_angle(self.states[:, 2] + pose.theta)
        return out


@dataclass(frozen=True)
class PrimitiveLibrary:
    primitives: tuple
    command_grid: np.ndarray

    def __len__(self):
        return len(self.primitives)

    def to_records(self) -> list:
        return [
            {
                "v": p.command.v,
                "omega": p.command.omega,
                "end_pose": [float(c) for c in p.end_pose],
                "path_length": p.path_length,
            }
            for p in self.primitives
        ]


@dataclass(frozen=True)
class PlannerConfig:
    k_d: float = 1.0
    k_theta: float = 0.5
    horizon: int = 2
    eta: float = 0.1
    eps_bar: float = 0.3
    fov_radius: float = 3.0
    dt: float = 0.1
    duration: float = 1.0

    def __post_init__(self):
        if self.k_d < 0 or self.k_theta < 0:
            raise ValueError("cost gains must be non-negative")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")


def command_lattice(bounds: CommandBounds, rows: int = 11, cols: int = 11) -> np.ndarray:
    """Uniform (v, omega) lattice over ``bounds``, v-major order."""
    v = np.linspace(bounds.v_min, bounds.v_max, rows)
    w = np.linspace(bounds.omega_min, bounds.omega_max, cols)
    vv, ww = np.meshgrid(v, w, indexing="ij")
    return np.column_stack([vv.ravel(), ww.ravel()])


def generate_library(grid, dt: float = 0.1, duration: float = 1.0) -> PrimitiveLibrary:
    grid = np.asarray(grid, dtype=float).reshape(-1, 2)
    if len(grid) == 0:
        raise EmptyLibrary("empty command lattice")
    n = int(round(duration / dt))
    prims = []
    for v, w in grid:
        u = Command(v, w)
        p = Pose(0.0, 0.0, 0.0)
        states = [(0.0, 0.0, 0.0)]
        for _ in range(n):
            p = step_teacher(p, u, dt)
            states.append((p.x, p.y, p.theta))
        arr = np.array(states)
        arr.setflags(write=False)
        prims.append(MotionPrimitive(u, duration, dt, arr))
    grid = grid.copy()
    grid.setflags(write=False)
    return PrimitiveLibrary(tuple(prims), grid)


def prune_library(lib: PrimitiveLibrary, limits) -> PrimitiveLibrary:
    """Keep primitives whose command lies inside the learner limits (hull if present, else box).

    Membership is closed with an absolute 1e-12 tolerance, so lattice commands
    sitting on a learned edge are kept.
    """
    keep = [p for p in lib.primitives if limits.contains(p.command)]
    if not keep:
        raise EmptyLibrary("no primitive lies inside the learner limits")
    grid = np.array([[p.command.v, p.command.omega] for p in keep])
    grid.setflags(write=False)
    return PrimitiveLibrary(tuple(keep), grid)


def dtw_distance(a, b) -> float:
    """Classic DTW over Euclidean (x, y) distances."""
    a = np.asarray(a, dtype=float)[:, :2]
    b = np.asarray(b, dtype=float)[:, :2]
    if len(a) == 0 or len(b) == 0:
        raise ValueError("DTW needs non-empty sequences")
    cost = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
    n, m = cost.shape
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for i in range(1, n + 1):
        row, prev = D[i], D[i - 1]
        ci = cost[i - 1]
        for j in range(1, m + 1):
            row[j] = ci[j - 1] + min(prev[j], row[j - 1], prev[j - 1])
    return float(D[n, m])


def path_segment(path: Polyline, pose, length: float, n_samples: int):
    """Sub-polyline starting at the path point nearest ``pose`` with the given arc length.

    Returns (points (n_samples, 2), end tangent heading).
    """
    _, s0 = path.project((pose.x, pose.y))
    s = np.linspace(s0, min(s0 + length, path.length), n_samples)
    pts = path.point_at(s)
    heading = float(path.heading_at(min(s0 + length, path.length) - 1e-9))
    return pts, heading


def primitive_cost(prim_states: np.ndarray, segment: np.ndarray, seg_heading: float, cfg: PlannerConfig):
    e_d = dtw_distance(segment, prim_states)
    e_theta = abs(wrap_angle(prim_states[-1, 2] - seg_heading))
    return cfg.k_d * e_d + cfg.k_theta * e_theta


def select_primitive(lib: PrimitiveLibrary, segment, current_pose: Pose, cfg: PlannerConfig, seg_heading=None):
    """Primitive minimizing k_d * DTW + k_theta * end-heading error (lowest index on ties).

    ``seg_heading`` defaults to the direction of the segment's last piece.
    """
    if len(lib) == 0:
        raise EmptyLibrary("empty library")
    segment = np.asarray(segment, dtype=float)[:, :2]
    if seg_heading is None:
        d = segment[-1] - segment[-2] if len(segment) > 1 else np.array([1.0, 0.0])
        seg_heading = math.atan2(d[1], d[0])
    best_i, best = -1, math.inf
    for i, p in enumerate(lib.primitives):
        c = primitive_cost(p.in_frame(current_pose), segment, seg_heading, cfg)
        if c < best:
            best_i, best = i, c
    return lib.primitives[best_i], best


def plan_local(lib: PrimitiveLibrary, path: Polyline, pose: Pose, cfg: PlannerConfig):
    """Greedy per-slot plan of ``cfg.horizon`` primitives.

    The desired segment has the arc length of the longest primitive in the
    library, so slow primitives are penalized for falling short.
    """
    seg_len = max(p.path_length for p in lib.primitives)
    plan, costs = [], []
    p = pose
    for _ in range(cfg.horizon):
        n_states = len(lib.primitives[0].states)
        segment, heading = path_segment(path, p, seg_len, n_states)
        prim, cost = select_primitive(lib, segment, p, cfg, heading)
        plan.append(prim)
        costs.append(cost)
        end = prim.in_frame(p)[-1]
        p = Pose(end[0], end[1], end[2])
    return plan, costs


def plan_polyline(plan, pose: Pose) -> np.ndarray:
    pts = []
    p = pose
    for prim in plan:
        st = prim.in_frame(p)
        pts.append(st if not pts else st[1:])
        p = Pose(*st[-1])
    return np.vstack(pts)


def deviation_threshold(position, obstacles, cfg: PlannerConfig) -> float:
    """eta times the clearance to the nearest obstacle within the field of view, else eps_bar."""
    p = np.asarray(position, dtype=float)[:2]
    clearances = []
    for ob in obstacles:
        d = max(0.0, float(np.hypot(*(p - np.asarray(ob.center)))) - ob.radius)
        if d <= cfg.fov_radius:
            clearances.append(d)
    if clearances:
        return cfg.eta * min(clearances)
    return cfg.eps_bar


def replan_trigger(current_pose, local_plan, obstacles, cfg: PlannerConfig) -> bool:
    """True when the distance to the planned polyline exceeds the clearance-dependent threshold."""
    plan = np.asarray(local_plan, dtype=float)
    if len(plan) == 0:
        raise ValueError("local plan must be non-empty")
    pos = (current_pose.x, current_pose.y) if isinstance(current_pose, Pose) else current_pose
    d = polyline_distance(plan, pos)
    return d > deviation_threshold(pos, obstacles, cfg)
