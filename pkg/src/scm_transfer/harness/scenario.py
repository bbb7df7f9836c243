"""Scenario documents (YAML) and their validated in-memory form."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from ..errors import ConfigError
from ..mpc import MpcConfig, Obstacle
from ..path import s_path
from ..primitives import PlannerConfig
from ..vehicle import CommandBounds, LearnerSpec, Pose, Warp

POLICIES = ("scm", "direct", "ideal")
MODES = ("primitive", "mpc")
PRESETS = ("table1_primitive", "table2_mpc", "experiment_warp", "toggle_ablation")


@dataclass(frozen=True)
class Calibration:
    """Learner commands on a lattice over the learner bounds (bounds included), each held ``hold_steps``."""

    grid: tuple = (5, 5)
    repeats: int = 1
    hold_steps: int = 1
    max_steps: Optional[int] = None


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str
    teacher_bounds: CommandBounds
    learner: LearnerSpec
    waypoints: np.ndarray
    start: Pose
    obstacles: tuple = ()
    policy: str = "scm"
    toggle_off_at: Optional[float] = None
    grid: tuple = (11, 11)
    k_min: int = 5
    calibration: Optional[Calibration] = None
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    mpc: dict = field(default_factory=dict)
    lattice: tuple = (11, 11)
    seed: int = 0
    max_sim_time: float = 120.0
    goal_tolerance: float = 0.15
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dt(self) -> float:
        return self.learner.dt

    def mpc_config(self, bounds: CommandBounds) -> MpcConfig:
        m = self.mpc
        return MpcConfig(
            command_constraints=bounds,
            horizon=int(m.get("horizon", 10)),
            Q=np.diag(m.get("Q", [10.0, 10.0, 1.0])) if np.ndim(m.get("Q", [0, 0, 0])) == 1 else np.array(m["Q"]),
            R=np.diag(m.get("R", [1.0, 1.0])) if np.ndim(m.get("R", [0, 0])) == 1 else np.array(m["R"]),
            eps_u=tuple(m.get("eps_u", (0.2, 0.3))),
            dt=self.dt,
            state_bounds=tuple(m["state_bounds"]) if m.get("state_bounds") else None,
            max_iter=int(m.get("max_iter", 100)),
            obstacle_weight=float(m.get("obstacle_weight", 200.0)),
            safety_margin=float(m.get("safety_margin", 0.05)),
            max_escalations=int(m.get("max_escalations", 5)),
        )

    @property
    def exploration_spacing(self) -> tuple:
        return float(self.mpc.get("exploration_spacing", 0.5)), int(self.mpc.get("exploration_steps", 10))

    def with_overrides(self, **kw) -> "Scenario":
        raw = copy.deepcopy(self.raw)
        if kw.get("seed") is not None:
            raw["seed"] = int(kw["seed"])
        if kw.get("policy") is not None:
            raw.setdefault("transfer", {})["policy"] = kw["policy"]
        if "toggle_off_at" in kw and kw["toggle_off_at"] is not None:
            raw.setdefault("transfer", {})["toggle_off_at"] = float(kw["toggle_off_at"])
        return scenario_from_dict(raw)


def _bounds(d, what) -> CommandBounds:
    if d is None:
        raise ConfigError(f"missing {what}")
    try:
        return CommandBounds.from_list(list(d))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {what}: {exc}") from exc


def _warp(d) -> Warp:
    if d is None:
        return Warp()
    if isinstance(d, str):
        return Warp(d)
    return Warp(d.get("kind", "identity"), tuple(d.get("coeffs", ())))


def _waypoints(d) -> np.ndarray:
    if d is None:
        raise ConfigError("missing path")
    if "waypoints" in d:
        pts = np.asarray(d["waypoints"], dtype=float)
    elif d.get("generator") == "s_curve":
        pts = s_path(
            float(d.get("length", 6.0)),
            float(d.get("amplitude", 1.0)),
            int(d.get("lobes", 2)),
            int(d.get("samples", 121)),
        )
    else:
        raise ConfigError("path needs 'waypoints' or generator: s_curve")
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2 or not np.all(np.isfinite(pts)):
        raise ConfigError("path waypoints must be an (n >= 2, 2) finite list")
    return pts


def scenario_from_dict(d: dict) -> Scenario:
    if not isinstance(d, dict):
        raise ConfigError("scenario document must be a mapping")
    try:
        mode = d.get("mode", "mpc")
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        teacher = _bounds((d.get("teacher") or {}).get("bounds"), "teacher.bounds")
        ld = d.get("learner") or {}
        dt = float(d.get("dt", 0.1))
        learner = LearnerSpec(
            bounds=_bounds(ld.get("bounds"), "learner.bounds"),
            warp_v=_warp(ld.get("warp_v")),
            warp_omega=_warp(ld.get("warp_omega")),
            noise_sigma=float(ld.get("noise_sigma", 0.0)),
            dt=dt,
            effective_bounds=_bounds(ld["effective_bounds"], "learner.effective_bounds")
            if ld.get("effective_bounds") is not None
            else None,
            heading_noise=float(ld.get("heading_noise", 0.0)),
        )
        pts = _waypoints(d.get("path"))
        sd = d.get("start") or {}
        heading0 = math.atan2(pts[1, 1] - pts[0, 1], pts[1, 0] - pts[0, 0])
        off = sd.get("offset", [0.0, 0.0])
        start = Pose(pts[0, 0] + float(off[0]), pts[0, 1] + float(off[1]), heading0 + float(sd.get("heading_offset", 0.0)))
        obstacles = tuple(Obstacle(tuple(o["center"]), float(o["radius"])) for o in d.get("obstacles") or [])
        td = d.get("transfer") or {}
        policy = td.get("policy", "scm")
        if policy == "baseline-direct":
            policy = "direct"
        if policy not in POLICIES:
            raise ConfigError(f"transfer.policy must be one of {POLICIES}")
        toggle = td.get("toggle_off_at")
        cal = td.get("calibration")
        calibration = None
        if cal:
            calibration = Calibration(
                tuple(int(g) for g in cal.get("grid", (5, 5))),
                int(cal.get("repeats", 1)),
                int(cal.get("hold_steps", 1)),
                None if cal.get("max_steps") is None else int(cal["max_steps"]),
            )
        pd = d.get("planner") or {}
        planner = PlannerConfig(
            k_d=float(pd.get("k_d", 1.0)),
            k_theta=float(pd.get("k_theta", 0.5)),
            horizon=int(pd.get("horizon", 2)),
            eta=float(pd.get("eta", 0.1)),
            eps_bar=float(pd.get("eps_bar", 0.3)),
            fov_radius=float(pd.get("fov_radius", 3.0)),
            dt=dt,
            duration=float(pd.get("duration", 1.0)),
        )
        sc = Scenario(
            name=str(d.get("name", "scenario")),
            mode=mode,
            teacher_bounds=teacher,
            learner=learner,
            waypoints=pts,
            start=start,
            obstacles=obstacles,
            policy=policy,
            toggle_off_at=None if toggle is None else float(toggle),
            grid=tuple(int(g) for g in td.get("grid", (11, 11))),
            k_min=int(td.get("k_min", 5)),
            calibration=calibration,
            planner=planner,
            mpc=dict(d.get("mpc") or {}),
            lattice=tuple(int(g) for g in (d.get("primitives") or {}).get("lattice", (11, 11))),
            seed=int(d.get("seed", 0)),
            max_sim_time=float(d.get("max_sim_time", 120.0)),
            goal_tolerance=float(d.get("goal_tolerance", 0.15)),
            raw=copy.deepcopy(d),
        )
        if mode == "mpc":
            sc.mpc_config(teacher)  # validate
        if sc.k_min < 1 or min(sc.grid) < 1:
            raise ConfigError("k_min and grid sizes must be positive")
        return sc
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc


def load_scenario(path) -> Scenario:
    """Load a scenario file, or a bundled preset by name."""
    p = Path(path)
    if not p.exists() and str(path) in PRESETS:
        text = resources.files("scm_transfer.harness").joinpath("presets").joinpath(f"{path}.yaml").read_text()
    else:
        # OSError propagates: an unreadable file is an I/O failure, not a bad config
        text = p.read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"scenario is not valid YAML: {exc}") from exc
    return scenario_from_dict(doc)


def load_preset(name: str) -> Scenario:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    return load_scenario(name)
