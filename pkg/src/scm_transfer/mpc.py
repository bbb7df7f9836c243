"""Receding-horizon teacher controller: single shooting with projected descent.

Stage cost ||x_k - x_ref_k||_Q^2 + ||u_k - u_ref_k||_R^2 summed over
k = 0..N-1 (heading error wrapped), plus a quadratic penalty for entering
an inflated obstacle disc. Commands are kept feasible by a sequential clamp
that enforces the box and the per-step slew limit exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, Infeasible
from .path import Polyline
from .vehicle import Command, CommandBounds, Pose, wrap_angle

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if not self.radius > 0:
            raise ConfigError("obstacle radius must be positive")

    def clearance(self, p) -> float:
        return math.hypot(p[0] - self.center[0], p[1] - self.center[1]) - self.radius


@dataclass(frozen=True)
class MpcConfig:
    command_constraints: CommandBounds
    horizon: int = 10
    Q: np.ndarray = field(default_factory=lambda: np.diag([10.0, 10.0, 1.0]))
    R: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0]))
    eps_u: tuple = (0.2, 0.3)
    dt: float = 0.1
    state_bounds: Optional[tuple] = None  # (x_min, x_max, y_min, y_max)
    max_iter: int = 100
    obstacle_weight: float = 200.0
    safety_margin: float = 0.05
    max_escalations: int = 5

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if Q.shape == (3,):
            Q = np.diag(Q)
        if R.shape == (2,):
            R = np.diag(R)
        if Q.shape != (3, 3) or R.shape != (2, 2):
            raise ConfigError("Q must be 3x3 and R 2x2")
        if not (np.allclose(Q, Q.T) and np.allclose(R, R.T)):
            raise ConfigError("weights must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-12 or np.linalg.eigvalsh(R).min() < -1e-12:
            raise ConfigError("weights must be positive semidefinite")
        if self.horizon < 2:
            raise ConfigError("horizon must be at least 2")
        eps = tuple(float(e) for e in self.eps_u)
        if len(eps) != 2 or min(eps) <= 0:
            raise ConfigError("eps_u must hold two positive values")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "eps_u", eps)


@dataclass(frozen=True)
class ReferencePlan:
    """Reference poses x_ref_0..x_ref_{N-1} and one reference command per decision variable."""

    states: np.ndarray
    commands: np.ndarray


@dataclass(frozen=True)
class SolveResult:
    commands: np.ndarray
    cost: float
    tracking_cost: float
    iterations: int
    escalations: int
    min_clearance: float
    states: np.ndarray


def sample_references(path: Polyline, pose: Pose, cfg: MpcConfig, spacing_scale: float = 1.0, commands=None):
    """Reference poses from the nearest path point, spaced spacing_scale * v_max * dt."""
    if not 0 < spacing_scale <= 1:
        raise ValueError("spacing_scale must lie in (0, 1]")
    N = cfg.horizon
    _, s0 = path.project((pose.x, pose.y))
    step = spacing_scale * cfg.command_constraints.v_max * cfg.dt
    s = np.minimum(s0 + step * np.arange(N), path.length)
    pts = path.point_at(s)
    head = path.heading_at(np.minimum(s, path.length - 1e-9))
    states = np.column_stack([pts, head])
    if commands is None:
        commands = np.zeros((N, 2))
    return ReferencePlan(states, np.asarray(commands, dtype=float).reshape(N, 2))


def project_commands(U: np.ndarray, bounds: CommandBounds, eps_u, prev_command=None) -> np.ndarray:
    """Sequential clamp: each command into the box intersected with the slew window of its predecessor."""
    lo = (bounds.v_min, bounds.omega_min)
    hi = (bounds.v_max, bounds.omega_max)
    out = np.empty_like(U, dtype=float)
    prev = None if prev_command is None else (float(prev_command[0]), float(prev_command[1]))
    for k in range(len(U)):
        row = []
        for c in range(2):
            a, b = lo[c], hi[c]
            windowed = False
            if prev is not None:
                a2, b2 = max(a, prev[c] - eps_u[c]), min(b, prev[c] + eps_u[c])
                if a2 <= b2:
                    a, b = a2, b2
                    windowed = True
                else:
                    # previous command left the (shrunken) box: the box wins over the slew limit
                    a = b = a if prev[c] < a else b
            val = min(b, max(a, float(U[k, c])))
            if windowed:
                # prev +- eps can round outward; step back so |val - prev| <= eps holds in floating point
                while val - prev[c] > eps_u[c] or prev[c] - val > eps_u[c]:
                    val = math.nextafter(val, prev[c])
            row.append(val)
        out[k] = row
        prev = (row[0], row[1])
    return out


class _Problem:
    def __init__(self, x0, ref: ReferencePlan, obstacles, cfg: MpcConfig, weight: float):
        self.x0 = (float(x0[0]), float(x0[1]), float(x0[2]))
        self.ref = ref.states.tolist()
        self.uref = ref.commands.tolist()
        self.obs = [(o.center[0], o.center[1], o.radius + cfg.safety_margin) for o in obstacles]
        self.Q = cfg.Q.tolist()
        self.R = cfg.R.tolist()
        self.dt = cfg.dt
        self.N = cfg.horizon
        self.w = weight
        self.sb = cfg.state_bounds

    def rollout(self, U):
        dt = self.dt
        x, y, th = self.x0
        xs = [(x, y, th)]
        for v, w in U:
            x += dt * v * math.cos(th)
            y += dt * v * math.sin(th)
            th += dt * w
            xs.append((x, y, th))
        return xs

    def _penalty(self, p, grad: bool):
        val = 0.0
        gx = gy = 0.0
        for cx, cy, r in self.obs:
            dx, dy = p[0] - cx, p[1] - cy
            d = math.hypot(dx, dy)
            if d < r:
                depth = r - d
                val += self.w * depth * depth
                if grad and d > 0:
                    gx -= 2 * self.w * depth * dx / d
                    gy -= 2 * self.w * depth * dy / d
        if self.sb is not None:
            x0, x1, y0, y1 = self.sb
            for q, lo, hi, idx in ((p[0], x0, x1, 0), (p[1], y0, y1, 1)):
                e = (lo - q) if q < lo else (q - hi) if q > hi else 0.0
                if e > 0:
                    val += self.w * e * e
                    if grad:
                        g = 2 * self.w * e * (-1.0 if q < lo else 1.0)
                        if idx == 0:
                            gx += g
                        else:
                            gy += g
        return val, gx, gy

    def cost(self, U, grad: bool = False):
        Q, R, dt = self.Q, self.R, self.dt
        xs = self.rollout(U)
        J = 0.0
        track = 0.0
        es = []
        for k in range(self.N):
            x, y, th = xs[k]
            rx, ry, rth = self.ref[k]
            e = (x - rx, y - ry, (th - rth + math.pi) % TWO_PI - math.pi)
            d = (U[k][0] - self.uref[k][0], U[k][1] - self.uref[k][1])
            qe = [Q[i][0] * e[0] + Q[i][1] * e[1] + Q[i][2] * e[2] for i in range(3)]
            rd = [R[i][0] * d[0] + R[i][1] * d[1] for i in range(2)]
            stage = e[0] * qe[0] + e[1] * qe[1] + e[2] * qe[2] + d[0] * rd[0] + d[1] * rd[1]
            J += stage
            es.append((qe, rd))
        track = J
        pens = [self._penalty(xs[k], grad) for k in range(1, self.N + 1)]
        J += sum(p[0] for p in pens)
        if not grad:
            return J, track, xs
        G = np.zeros((self.N, 2))
        _, pgx, pgy = pens[self.N - 1]
        lam = [pgx, pgy, 0.0]
        for k in range(self.N - 1, -1, -1):
            x, y, th = xs[k]
            v = U[k][0]
            c, s = math.cos(th), math.sin(th)
            qe, rd = es[k]
            G[k, 0] = dt * (c * lam[0] + s * lam[1]) + 2 * rd[0]
            G[k, 1] = dt * lam[2] + 2 * rd[1]
            if k == 0:
                break
            _, pgx, pgy = pens[k - 1]
            lam = [
                lam[0] + 2 * qe[0] + pgx,
                lam[1] + 2 * qe[1] + pgy,
                lam[2] + dt * v * (-s * lam[0] + c * lam[1]) + 2 * qe[2],
            ]
        return J, track, xs, G


def _min_clearance(xs, obstacles) -> float:
    if not obstacles:
        return math.inf
    return min(o.clearance(p) for p in xs[1:] for o in obstacles)


def _descend(prob: _Problem, U, bounds, eps_u, prev_command, max_iter):
    J, track, xs, G = prob.cost(U.tolist(), grad=True)
    step = 0.05
    it = 0
    prev_U = prev_G = None
    for it in range(1, max_iter + 1):
        if prev_U is not None:
            sU = (U - prev_U).ravel()
            sG = (G - prev_G).ravel()
            denom = float(sU @ sG)
            if denom > 1e-16:
                step = min(1e2, max(1e-6, float(sU @ sU) / denom))
        accepted = False
        for _ in range(40):
            U_new = project_commands(U - step * G, bounds, eps_u, prev_command)
            dU = U_new - U
            if not np.any(dU):
                break
            J_new, track_new, xs_new = prob.cost(U_new.tolist())
            if J_new <= J + 1e-4 * float(np.sum(G * dU)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        prev_U, prev_G = U, G
        U = U_new
        J_old = J
        J, track, xs, G = prob.cost(U.tolist(), grad=True)
        if J_old - J <= 1e-12 * max(1.0, J_old) or float(np.abs(dU).max()) < 1e-10:
            break
    return U, J, track, xs, it


def solve_ocp(
    x0,
    ref: ReferencePlan,
    obstacles,
    cfg: MpcConfig,
    warm_start=None,
    prev_command=None,
) -> SolveResult:
    """Solve the horizon problem; the result never costs more than the (projected) warm start."""
    if isinstance(x0, Pose):
        x0 = (x0.x, x0.y, x0.theta)
    if not all(math.isfinite(c) for c in x0):
        raise ValueError("initial state must be finite")
    N = cfg.horizon
    bounds = cfg.command_constraints
    if warm_start is None:
        warm_start = np.tile([bounds.v_min, 0.0], (N, 1))
    U0 = project_commands(np.asarray(warm_start, dtype=float).reshape(N, 2), bounds, cfg.eps_u, prev_command)
    obstacles = list(obstacles)
    weight = cfg.obstacle_weight
    U = U0
    total_it = 0
    for esc in range(cfg.max_escalations + 1):
        prob = _Problem(x0, ref, obstacles, cfg, weight)
        J0, _, xs0 = prob.cost(U0.tolist())
        Jc, _, _ = prob.cost(U.tolist())
        start = U if Jc < J0 else U0
        U, J, track, xs, it = _descend(prob, start, bounds, cfg.eps_u, prev_command, cfg.max_iter)
        total_it += it
        if J > J0:
            U, J, xs = U0, J0, xs0
            track = prob.cost(U.tolist())[1]
        clearance = _min_clearance(xs, obstacles)
        if clearance > 0:
            return SolveResult(U, J, track, total_it, esc, clearance, np.array(xs))
        weight *= 2.0
    raise Infeasible(f"obstacle clearance {clearance:.3e} after {cfg.max_escalations} penalty escalations")


@dataclass(frozen=True)
class MpcDiagnostics:
    cost: float
    tracking_cost: float
    iterations: int
    escalations: int
    min_clearance: float
    box_margin: float
    slew_margin: float


def mpc_step(
    state: Pose,
    path: Polyline,
    obstacles,
    cfg: MpcConfig,
    limits,
    prev_solution=None,
    spacing_scale: float = 1.0,
    prev_command=None,
):
    """First command of the horizon solution under the current learner limits.

    Returns (command, diagnostics, full solution). ``prev_solution`` shifted
    by one step is both the warm start and the command reference; on the
    first call the reference is zero.
    """
    cfg = replace(cfg, command_constraints=limits.teacher_box)
    N = cfg.horizon
    if prev_solution is None:
        u_ref = np.zeros((N, 2))
        warm = None
    else:
        P = np.asarray(prev_solution, dtype=float).reshape(N, 2)
        u_ref = np.vstack([P[1:], P[-1:]])
        warm = u_ref
    ref = sample_references(path, state, cfg, spacing_scale, u_ref)
    res = solve_ocp(state, ref, obstacles, cfg, warm, prev_command)
    U = res.commands
    b = cfg.command_constraints
    box_margin = float(
        min(np.min(U[:, 0] - b.v_min), np.min(b.v_max - U[:, 0]), np.min(U[:, 1] - b.omega_min), np.min(b.omega_max - U[:, 1]))
    )
    if N > 1:
        dU = np.abs(np.diff(U, axis=0))
        slew_margin = float(min(cfg.eps_u[0] - dU[:, 0].max(), cfg.eps_u[1] - dU[:, 1].max()))
    else:
        slew_margin = math.inf
    diag = MpcDiagnostics(res.cost, res.tracking_cost, res.iterations, res.escalations, res.min_clearance, box_margin, slew_margin)
    return Command(U[0, 0], U[0, 1]), diag, U
