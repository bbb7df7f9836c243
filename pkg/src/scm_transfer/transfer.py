"""Command pairs, learner-limit learning, mapping quads and SCM command transfer.

All geometry happens in normalized coordinates: teacher equivalents are
normalized by the current teacher box, learner commands by the learner's
own bounds. Both domains are then subsets of the unit square.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import (
    OutOfDomain,
    DegenerateInput,
    DegenerateNormalization,
    InconsistentMotion,
    NonConvergence,
    OutsideSourcePolygon,
    QuadratureFailure,
    ScmTransferError,
)
from .geometry import (
    Polygon2,
    convex_hull,
    delaunay_triangulate,
    distance_to_boundary,
    is_simple_polygon,
    locate_triangle,
    point_in_polygon,
)
from .scm import ScmMap, build_rectangle_map, transfer_point
from .vehicle import (
    Command,
    CommandBounds,
    Pose,
    denormalize_command,
    inverse_teacher_command,
    normalize_command,
)

BOUNDARY_TOL = 1e-9
OUTLIER_TOL = 1e-9
MIN_NORM = 1e-6
# area / diameter^2 below this means a conformal modulus the strip solver cannot reach
MIN_QUAD_FATNESS = 1e-2

MAPPED, DIRECT, PERTURBED, BASELINE = "MAPPED", "DIRECT", "PERTURBED", "BASELINE"


def _cell_index(n, rows: int, cols: int) -> tuple:
    i = min(rows - 1, max(0, int(math.floor(n[0] * rows))))
    j = min(cols - 1, max(0, int(math.floor(n[1] * cols))))
    return i, j


# ---------------------------------------------------------------------------
# pairs


@dataclass(frozen=True)
class CommandPair:
    teacher_equiv: Command
    learner_cmd: Command
    support_count: int
    cell: tuple = (0, 0)
    # per channel: -1 / +1 when every supporting command sat on the lower / upper learner bound
    boundary: tuple = (0, 0)

    @property
    def key(self) -> tuple:
        return (*self.cell, *self.boundary)

    def to_dict(self) -> dict:
        return {
            "teacher_equiv": [self.teacher_equiv.v, self.teacher_equiv.omega],
            "learner_cmd": [self.learner_cmd.v, self.learner_cmd.omega],
            "support_count": self.support_count,
            "cell": list(self.cell),
            "boundary": list(self.boundary),
        }

    @classmethod
    def from_dict(cls, d) -> "CommandPair":
        return cls(
            Command.from_array(d["teacher_equiv"]),
            Command.from_array(d["learner_cmd"]),
            int(d["support_count"]),
            tuple(int(c) for c in d.get("cell", (0, 0))),
            tuple(int(c) for c in d.get("boundary", (0, 0))),
        )


class PairStore:
    """Clusters raw observations by the cell of their normalized learner command.

    Rows index the linear-velocity channel, columns the angular one. Commands
    that sit exactly on a learner bound (as clamped commands do) form their
    own cluster within the cell, so their mean stays on the bound and keeps
    its value as boundary evidence for the limits.
    """

    def __init__(
        self,
        learner_bounds: CommandBounds,
        teacher_bounds: CommandBounds,
        rows: int = 11,
        cols: int = 11,
        k_min: int = 5,
    ):
        if rows < 1 or cols < 1 or k_min < 1:
            raise ValueError("grid size and k_min must be positive")
        self.learner_bounds = learner_bounds
        self.teacher_bounds = teacher_bounds
        self.rows, self.cols, self.k_min = rows, cols, k_min
        # (row, col, v side, omega side) -> [sum vT, sum wT, sum vL, sum wL, count]
        self.cells: dict = {}
        self.refined: dict = {}
        self.diagnostics = {"inconsistent": 0, "outside_teacher_bounds": 0, "accepted": 0}
        self.version = 0

    def cell_of(self, u_L: Command) -> tuple:
        return _cell_index(normalize_command(u_L, self.learner_bounds), self.rows, self.cols)

    def boundary_of(self, u_L: Command) -> tuple:
        lb = self.learner_bounds
        out = []
        for x, lo, hi in ((u_L.v, lb.v_min, lb.v_max), (u_L.omega, lb.omega_min, lb.omega_max)):
            out.append(-1 if x <= lo else (1 if x >= hi else 0))
        return tuple(out)

    def add(self, teacher_equiv: Command, u_L: Command) -> Optional[CommandPair]:
        """Accumulate one observation; returns the refined pair if it was created or updated."""
        tb = self.teacher_bounds
        nt = normalize_command(teacher_equiv, tb)
        if np.any(nt < -OUTLIER_TOL) or np.any(nt > 1 + OUTLIER_TOL):
            self.diagnostics["outside_teacher_bounds"] += 1
            return None
        self.diagnostics["accepted"] += 1
        cell = self.cell_of(u_L)
        side = self.boundary_of(u_L)
        key = (*cell, *side)
        acc = self.cells.setdefault(key, [0.0, 0.0, 0.0, 0.0, 0])
        acc[0] += teacher_equiv.v
        acc[1] += teacher_equiv.omega
        acc[2] += u_L.v
        acc[3] += u_L.omega
        acc[4] += 1
        if acc[4] < self.k_min:
            return None
        n = acc[4]
        lb = self.learner_bounds
        v_L = {-1: lb.v_min, 1: lb.v_max}.get(side[0], acc[2] / n)
        w_L = {-1: lb.omega_min, 1: lb.omega_max}.get(side[1], acc[3] / n)
        pair = CommandPair(Command(acc[0] / n, acc[1] / n), Command(v_L, w_L), n, cell, side)
        self.refined[key] = pair
        self.version += 1
        return pair

    @property
    def refined_pairs(self) -> list:
        return [self.refined[c] for c in sorted(self.refined)]

    def raw_count(self, cell) -> int:
        """Observations in a grid cell (all clusters) or in one cluster key."""
        cell = tuple(cell)
        if len(cell) == 4:
            acc = self.cells.get(cell)
            return acc[4] if acc else 0
        return sum(acc[4] for k, acc in self.cells.items() if k[:2] == cell)

    def to_dict(self) -> dict:
        return {
            "grid": [self.rows, self.cols],
            "k_min": self.k_min,
            "learner_bounds": self.learner_bounds.as_list(),
            "teacher_bounds": self.teacher_bounds.as_list(),
            "refined_pairs": [p.to_dict() for p in self.refined_pairs],
            "cells": [
                {"key": list(c), "sums": [float(s) for s in self.cells[c][:4]], "count": self.cells[c][4]}
                for c in sorted(self.cells)
            ],
            "diagnostics": dict(self.diagnostics),
        }

    @classmethod
    def from_dict(cls, d) -> "PairStore":
        store = cls(
            CommandBounds.from_list(d["learner_bounds"]),
            CommandBounds.from_list(d["teacher_bounds"]),
            int(d["grid"][0]),
            int(d["grid"][1]),
            int(d["k_min"]),
        )
        for c in d.get("cells", []):
            store.cells[tuple(int(k) for k in c["key"])] = [*map(float, c["sums"]), int(c["count"])]
        for p in d.get("refined_pairs", []):
            pair = CommandPair.from_dict(p)
            store.refined[pair.key] = pair
        store.diagnostics.update(d.get("diagnostics", {}))
        store.version = len(store.refined)
        return store


def record_observation(
    store: PairStore,
    u_L: Command,
    p0: Pose,
    p1: Pose,
    dt: float,
    steps: int = 1,
    noise_sigma: float = 0.0,
) -> Optional[CommandPair]:
    """Infer the equivalent teacher command of an observed learner motion and cluster it."""
    try:
        u_T = inverse_teacher_command(p0, p1, dt, steps=steps, noise_sigma=noise_sigma)
    except InconsistentMotion:
        store.diagnostics["inconsistent"] += 1
        raise
    return store.add(u_T, u_L)


# ---------------------------------------------------------------------------
# learner limits


@dataclass(frozen=True)
class LimitUpdate:
    t: float
    edge: str
    old: float
    new: float
    rule: str

    def to_dict(self) -> dict:
        return {"t": self.t, "edge": self.edge, "old": self.old, "new": self.new, "rule": self.rule}


EDGES = ("v_min", "v_max", "omega_min", "omega_max")


@dataclass(frozen=True)
class LearnerLimits:
    """Allowable teacher commands (a box in the teacher domain) learned from pairs."""

    teacher_box: CommandBounds
    hull: Optional[Polygon2] = None
    edge_sources: tuple = ("initial",) * 4
    history: tuple = ()

    @classmethod
    def initial(cls, teacher_bounds: CommandBounds) -> "LearnerLimits":
        return cls(teacher_bounds)

    def contains(self, u: Command, tol: float = 1e-12) -> bool:
        if self.hull is not None:
            return point_in_polygon(self.hull, (u.v, u.omega)) or distance_to_boundary(
                self.hull, (u.v, u.omega)
            ) <= tol
        return self.teacher_box.contains(u, tol)

    def to_dict(self) -> dict:
        return {
            "teacher_box": self.teacher_box.as_list(),
            "edge_sources": list(self.edge_sources),
            "hull": None if self.hull is None else self.hull.vertices.tolist(),
            "history": [h.to_dict() for h in self.history],
        }

    @classmethod
    def from_dict(cls, d) -> "LearnerLimits":
        hull = d.get("hull")
        return cls(
            CommandBounds.from_list(d["teacher_box"]),
            None if hull is None else Polygon2(np.asarray(hull, dtype=float)),
            tuple(d.get("edge_sources", ("initial",) * 4)),
            tuple(LimitUpdate(**h) for h in d.get("history", [])),
        )


def _learner_side(nL: float, upper: bool) -> float:
    # distance-from-the-opposite-edge version of the normalized coordinate
    return nL if upper else 1.0 - nL


def update_limits(
    limits: LearnerLimits,
    new_pair: CommandPair,
    learner_bounds: CommandBounds,
    teacher_bounds: CommandBounds,
    on_boundary: Optional[bool] = None,
    reference_pairs=(),
    t: float = 0.0,
    allow_proportional: bool = True,
) -> LearnerLimits:
    """Revise the teacher box after a new refined pair.

    Per channel and side:

    * a pair whose learner command sits on a learner bound (within 1e-9)
      sets the corresponding edge to its teacher equivalent directly; this is
      the only rule allowed to grow the box;
    * a non-boundary pair whose teacher equivalent lies beyond an edge leaves
      that edge alone;
    * an outlier (learner command beyond those of all ``reference_pairs`` on
      the upper half for the max edge, lower half for the min edge) shrinks
      the edge by proportional extrapolation ``n_T / n_L`` of its normalized
      coordinates, unless a boundary pair already fixed that edge.

    ``on_boundary=None`` detects boundary membership per side from the
    learner command; ``False`` disables the boundary rule.
    ``allow_proportional=False`` restricts the update to the boundary rule.
    """
    box = limits.teacher_box
    lo, hi = box.lower.copy(), box.upper.copy()
    sources = list(limits.edge_sources)
    history = list(limits.history)
    nL = normalize_command(new_pair.learner_cmd, learner_bounds)
    te = new_pair.teacher_equiv.as_array()
    nT = (te - lo) / (hi - lo)
    ref_nL = np.array([normalize_command(p.learner_cmd, learner_bounds) for p in reference_pairs]).reshape(-1, 2)
    ref_te = np.array([p.teacher_equiv.as_array() for p in reference_pairs]).reshape(-1, 2)
    t_lo, t_hi = teacher_bounds.lower, teacher_bounds.upper

    def set_edge(c, upper, value, rule):
        k = 2 * c + (1 if upper else 0)
        arr = hi if upper else lo
        value = float(np.clip(value, t_lo[c], t_hi[c]))
        if value != arr[c]:
            history.append(LimitUpdate(t, EDGES[k], float(arr[c]), value, rule))
            arr[c] = value
        sources[k] = rule

    for c in range(2):
        for upper in (False, True):
            k = 2 * c + (1 if upper else 0)
            at_bound = abs(nL[c] - (1.0 if upper else 0.0)) <= BOUNDARY_TOL
            if on_boundary is not False and at_bound:
                set_edge(c, upper, te[c], "boundary")
                continue
            if (upper and nT[c] > 1.0) or (not upper and nT[c] < 0.0):
                # beyond the edge without boundary evidence: the box only grows via the boundary rule
                continue
            if sources[k] == "boundary" or not allow_proportional:
                continue
            s = _learner_side(nL[c], upper)
            if s < 0.5:
                continue
            if len(ref_nL) and np.any(_learner_side(ref_nL[:, c], upper) >= s):
                continue
            if s < MIN_NORM:
                raise DegenerateNormalization(f"normalized learner command {s:.2e} too small")
            sT = nT[c] if upper else 1.0 - nT[c]
            ratio = sT / s
            span = hi[c] - lo[c]
            if upper:
                proposal = lo[c] + ratio * span
                floor = max([te[c], *ref_te[:, c]]) if len(ref_te) else te[c]
                proposal = max(proposal, floor)
                if proposal < hi[c] - OUTLIER_TOL * span:
                    set_edge(c, True, proposal, "proportional")
            else:
                proposal = hi[c] - ratio * span
                ceil = min([te[c], *ref_te[:, c]]) if len(ref_te) else te[c]
                proposal = min(proposal, ceil)
                if proposal > lo[c] + OUTLIER_TOL * span:
                    set_edge(c, False, proposal, "proportional")

    if not (lo[0] < hi[0] and lo[1] < hi[1]):
        return limits
    new_box = CommandBounds(lo[0], hi[0], lo[1], hi[1])
    return LearnerLimits(new_box, limits.hull, tuple(sources), tuple(history))


def is_limit_outlier(pair: CommandPair, limits: LearnerLimits, learner_bounds: CommandBounds) -> tuple:
    """(on a learner bound, teacher equivalent strictly outside the current box) for a refined pair."""
    nL = normalize_command(pair.learner_cmd, learner_bounds)
    on_bound = bool(np.any(np.abs(nL) <= BOUNDARY_TOL) or np.any(np.abs(nL - 1.0) <= BOUNDARY_TOL))
    nT = normalize_command(pair.teacher_equiv, limits.teacher_box)
    outside = bool(np.any(nT < -OUTLIER_TOL) or np.any(nT > 1.0 + OUTLIER_TOL))
    return on_bound, outside


def boundary_hull(pairs, learner_bounds: CommandBounds) -> Optional[Polygon2]:
    """Convex hull of teacher equivalents of pairs whose learner command lies on a learner bound."""
    pts = []
    for p in pairs:
        n = normalize_command(p.learner_cmd, learner_bounds)
        if np.any(np.abs(n) <= BOUNDARY_TOL) or np.any(np.abs(n - 1.0) <= BOUNDARY_TOL):
            pts.append(p.teacher_equiv.as_array())
    if len(pts) < 3:
        return None
    try:
        return convex_hull(np.array(pts))
    except DegenerateInput:
        return None


# ---------------------------------------------------------------------------
# mapping quads and transfer


@dataclass(frozen=True)
class MappingQuad:
    teacher: Polygon2
    learner: Polygon2
    pair_indices: tuple


@dataclass(frozen=True)
class TransferOutcome:
    learner_cmd: Command
    mode: str
    quad_used: Optional[MappingQuad] = None
    flags: tuple = ()


def _normalized_pairs(store: PairStore, box: CommandBounds):
    pairs = store.refined_pairs
    T = np.array([normalize_command(p.teacher_equiv, box) for p in pairs]).reshape(-1, 2)
    L = np.array([normalize_command(p.learner_cmd, store.learner_bounds) for p in pairs]).reshape(-1, 2)
    return pairs, T, L


class TransferContext:
    """Caches the triangulation (per pair-store version and box) and solved SCM maps."""

    def __init__(self):
        self._tri_key = None
        self._tri = None
        self._data = None
        self._maps: dict = {}

    def triangulation(self, store: PairStore, box: CommandBounds):
        key = (id(store), store.version, tuple(box.as_list()))
        if key != self._tri_key:
            pairs, T, L = _normalized_pairs(store, box)
            try:
                tri = delaunay_triangulate(T) if len(T) >= 3 else None
            except DegenerateInput:
                tri = None
            self._tri_key, self._tri, self._data = key, tri, (pairs, T, L)
        return self._tri, self._data

    def rectangle_map(self, poly: Polygon2) -> ScmMap:
        key = poly.vertices.tobytes()
        m = self._maps.get(key)
        if m is None:
            if len(self._maps) > 4096:
                self._maps.clear()
            try:
                m = build_rectangle_map(poly)
            except ScmTransferError as exc:
                # remember failures too; the same quad is typically requested again
                m = exc
            self._maps[key] = m
        if isinstance(m, Exception):
            raise m
        return m


def _quad_order(tri, t: int, k: int):
    """Vertices of triangle t merged across the edge opposite its vertex k, counterclockwise."""
    a = tri.triangles[t][k]
    b = tri.triangles[t][(k + 1) % 3]
    c = tri.triangles[t][(k + 2) % 3]
    n = tri.neighbors[t][k]
    d = next(v for v in tri.triangles[n] if v != b and v != c)
    return (int(a), int(b), int(d), int(c))


def build_mapping_quad(store: PairStore, w_T, box: CommandBounds, ctx: Optional[TransferContext] = None):
    """Teacher/learner quadrilaterals (normalized) for a normalized teacher command, or None.

    ``w_T`` is given in normalized teacher-box coordinates. Candidate merges
    are tried smallest teacher area first; slivers (area below
    MIN_QUAD_FATNESS * diameter^2 in either domain) are skipped like
    non-simple merges.
    """
    ctx = ctx or TransferContext()
    if len(store.refined) < 4:
        return None
    tri, (pairs, T, L) = ctx.triangulation(store, box)
    if tri is None:
        return None
    w = np.asarray(w_T, dtype=float)
    t = locate_triangle(tri, w)
    if t is None:
        return None
    candidates = []
    for k in range(3):
        if tri.neighbors[t][k] < 0:
            continue
        idx = _quad_order(tri, t, k)
        tq = Polygon2(T[list(idx)])
        candidates.append((tq.area, k, idx, tq))
    candidates.sort(key=lambda c: (c[0], c[1]))
    for _, _, idx, tq in candidates:
        try:
            lq = Polygon2(L[list(idx)])
        except (DegenerateInput, ValueError):
            continue
        if not (tq.is_ccw and lq.is_ccw and is_simple_polygon(tq) and is_simple_polygon(lq)):
            continue
        if min(tq.area / tq.diameter**2, lq.area / lq.diameter**2) < MIN_QUAD_FATNESS:
            continue
        if not point_in_polygon(tq, w):
            continue
        return MappingQuad(tq, lq, idx)
    return None


def _nudge_inside(poly: Polygon2, w: np.ndarray) -> np.ndarray:
    d = poly.diameter
    if distance_to_boundary(poly, w) > 1e-9 * d:
        return w
    c = poly.centroid
    for frac in (1e-8, 1e-6, 1e-4):
        q = w + frac * (c - w) / max(np.hypot(*(c - w)), 1e-300) * d
        if point_in_polygon(poly, q) and distance_to_boundary(poly, q) > 1e-10 * d:
            return q
    return c


def _perturb_target(store: PairStore, box: CommandBounds, nT: np.ndarray, configured: set):
    rows, cols = store.rows, store.cols
    i, j = _cell_index(nT, rows, cols)
    best = None
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            a, b = i + di, j + dj
            if not (0 <= a < rows and 0 <= b < cols) or (a, b) in configured:
                continue
            center = np.array([(a + 0.5) / rows, (b + 0.5) / cols])
            d = float(np.hypot(*(center - nT)))
            key = (d, a * cols + b)
            if best is None or key < best[0]:
                best = (key, center)
    return None if best is None else best[1]


def transfer(
    store: PairStore,
    limits: LearnerLimits,
    w_T: Command,
    ctx: Optional[TransferContext] = None,
) -> TransferOutcome:
    """Map a desired teacher command to a learner command (Mapped, Direct or Perturbed)."""
    ctx = ctx or TransferContext()
    box = limits.teacher_box
    nT = normalize_command(w_T, box)
    flags = []
    quad = build_mapping_quad(store, nT, box, ctx)
    if quad is not None:
        try:
            w = _nudge_inside(quad.teacher, nT)
            map_T = ctx.rectangle_map(quad.teacher)
            map_L = ctx.rectangle_map(quad.learner)
            z = transfer_point(map_T, map_L, complex(w[0], w[1]))
            out = denormalize_command([z.real, z.imag], store.learner_bounds)
            return TransferOutcome(out, MAPPED, quad)
        except (NonConvergence, QuadratureFailure, DegenerateInput, OutsideSourcePolygon, OutOfDomain) as exc:
            return TransferOutcome(w_T, DIRECT, quad, (f"scm_failure:{type(exc).__name__}",))
    # the teacher-box grid and the learner clustering grid are aligned by index:
    # a cell is configured when the learner cluster with that index has a refined pair
    configured = {k[:2] for k in store.refined}
    cell = _cell_index(nT, store.rows, store.cols)
    if cell in configured:
        target = _perturb_target(store, box, nT, configured)
        if target is not None:
            # explore the unconfigured learner cell itself
            out = denormalize_command(target, store.learner_bounds)
            return TransferOutcome(out, PERTURBED, None, tuple(flags))
        flags.append("all_neighbors_configured")
    return TransferOutcome(w_T, DIRECT, None, tuple(flags))
