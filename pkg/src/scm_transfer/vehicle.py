"""Unicycle teacher, warped learner, and inverse teacher kinematics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, InconsistentMotion


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if w.ndim == 0 else w


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))
        if not all(math.isfinite(c) for c in (self.x, self.y, self.theta)):
            raise ValueError("pose must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Command:
    v: float
    omega: float

    def __post_init__(self):
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "omega", float(self.omega))

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.omega])

    @classmethod
    def from_array(cls, a) -> "Command":
        return cls(float(a[0]), float(a[1]))


@dataclass(frozen=True)
class CommandBounds:
    v_min: float
    v_max: float
    omega_min: float
    omega_max: float

    def __post_init__(self):
        for name in ("v_min", "v_max", "omega_min", "omega_max"):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = (self.v_min, self.v_max, self.omega_min, self.omega_max)
        if not all(math.isfinite(float(c)) for c in vals):
            raise ConfigError("bounds must be finite")
        if not (self.v_min < self.v_max and self.omega_min < self.omega_max):
            raise ConfigError(f"invalid bounds {vals}")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.v_min, self.omega_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.v_max, self.omega_max])

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, u: Command, tol: float = 0.0) -> bool:
        a = u.as_array()
        return bool(np.all(a >= self.lower - tol) and np.all(a <= self.upper + tol))

    def clamp(self, u: Command) -> Command:
        return Command.from_array(np.clip(u.as_array(), self.lower, self.upper))

    def as_list(self) -> list:
        return [float(self.v_min), float(self.v_max), float(self.omega_min), float(self.omega_max)]

    @classmethod
    def from_list(cls, vals) -> "CommandBounds":
        if len(vals) != 4:
            raise ConfigError("bounds need [v_min, v_max, omega_min, omega_max]")
        return cls(*(float(v) for v in vals))


def normalize_command(u: Command, b: CommandBounds) -> np.ndarray:
    """Channel-wise min-max normalization; values outside [0, 1] are allowed."""
    return (u.as_array() - b.lower) / b.span


def denormalize_command(n, b: CommandBounds) -> Command:
    return Command.from_array(np.asarray(n, dtype=float) * b.span + b.lower)


# coefficients of the experiment warp, ascending powers 1..7; the sign of the
# fifth-order term is taken positive (see README), which makes h monotone with h(1) = 0.99
POLY7_COEFFS = (2.12, -5.08, 24.77, -86.98, 144.65, -109.91, 31.42)
WARP_KINDS = ("identity", "cubic", "shifted_cubic", "polynomial7")


@dataclass(frozen=True)
class Warp:
    """Nonlinear map applied to a normalized command channel."""

    kind: str = "identity"
    coeffs: tuple = ()

    def __post_init__(self):
        if self.kind not in WARP_KINDS:
            raise ConfigError(f"unknown warp {self.kind!r}; expected one of {WARP_KINDS}")
        if self.kind == "polynomial7" and not self.coeffs:
            object.__setattr__(self, "coeffs", POLY7_COEFFS)

    def __call__(self, n):
        n = np.asarray(n, dtype=float)
        if self.kind == "identity":
            return n
        if self.kind == "cubic":
            return n**3
        if self.kind == "shifted_cubic":
            return 4.0 * (n - 0.5) ** 3 + 0.5
        out = np.zeros_like(n)
        for p, c in enumerate(self.coeffs, start=1):
            out = out + c * n**p
        # the fitted polynomial is not endpoint-exact
        return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class LearnerSpec:
    """Black-box learner: clamp -> normalize -> warp -> denormalize -> unicycle step.

    ``effective_bounds`` is the velocity range actually realized at the
    normalized endpoints; it defaults to ``bounds`` (the learner reports its
    motion in the same units it is commanded in).
    """

    bounds: CommandBounds
    warp_v: Warp = field(default_factory=Warp)
    warp_omega: Warp = field(default_factory=Warp)
    noise_sigma: float = 0.0
    dt: float = 0.1
    effective_bounds: Optional[CommandBounds] = None
    heading_noise: float = 0.0

    def __post_init__(self):
        if self.noise_sigma < 0 or self.heading_noise < 0:
            raise ConfigError("noise must be non-negative")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.effective_bounds is None:
            object.__setattr__(self, "effective_bounds", self.bounds)

    def effective_command(self, u: Command) -> Command:
        """The teacher-domain velocities the learner actually realizes for command u."""
        n = normalize_command(self.bounds.clamp(u), self.bounds)
        h = np.array([float(self.warp_v(n[0])), float(self.warp_omega(n[1]))])
        return denormalize_command(h, self.effective_bounds)


def step_teacher(p: Pose, u: Command, dt: float) -> Pose:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return Pose(
        p.x + dt * u.v * math.cos(p.theta),
        p.y + dt * u.v * math.sin(p.theta),
        p.theta + dt * u.omega,
    )


def step_learner(p: Pose, u: Command, spec: LearnerSpec, rng: Optional[np.random.Generator] = None) -> Pose:
    """One learner step; Gaussian position noise is drawn only when noise_sigma > 0."""
    q = step_teacher(p, spec.effective_command(u), spec.dt)
    if spec.noise_sigma > 0.0 or spec.heading_noise > 0.0:
        if rng is None:
            raise ValueError("a random generator is required for a noisy learner")
        dx, dy = rng.normal(0.0, spec.noise_sigma, 2) if spec.noise_sigma > 0 else (0.0, 0.0)
        dth = rng.normal(0.0, spec.heading_noise) if spec.heading_noise > 0 else 0.0
        q = Pose(q.x + dx, q.y + dy, q.theta + dth)
    return q


def inverse_teacher_command(
    p0: Pose, p1: Pose, dt: float, steps: int = 1, noise_sigma: float = 0.0
) -> Command:
    """Teacher command that takes p0 to p1 in ``steps`` Euler steps of length dt.

    For one step this is the projection of the displacement onto the initial
    heading. For several steps with a held command the heading advances by
    omega * dt each step, and v follows from projecting the displacement onto
    dt * sum_k exp(i (theta0 + k omega dt)).
    """
    if dt <= 0 or steps < 1:
        raise ValueError("dt must be positive and steps >= 1")
    T = dt * steps
    omega = wrap_angle(p1.theta - p0.theta) / T
    dx, dy = p1.x - p0.x, p1.y - p0.y
    if steps == 1:
        c, s = math.cos(p0.theta), math.sin(p0.theta)
        v = (dx * c + dy * s) / dt
        lateral = abs(-dx * s + dy * c)
    else:
        ang = p0.theta + omega * dt * np.arange(steps)
        S = complex(dt * np.sum(np.cos(ang)), dt * np.sum(np.sin(ang)))
        d = complex(dx, dy) * S.conjugate()
        v = d.real / abs(S) ** 2
        lateral = abs(d.imag) / abs(S)
    if lateral > 3.0 * noise_sigma + 1e-9:
        raise InconsistentMotion(f"lateral residual {lateral:.3e} exceeds {3.0 * noise_sigma + 1e-9:.3e}")
    return Command(float(v), float(omega))
