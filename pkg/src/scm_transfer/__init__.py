"""Teacher-to-learner command transfer with Schwarz-Christoffel rectangle maps."""

from .errors import (
    ConfigError,
    DegenerateInput,
    EmptyLibrary,
    InconsistentMotion,
    Infeasible,
    NonConvergence,
    OutsideSourcePolygon,
    ScmTransferError,
)
from .geometry import Polygon2, convex_hull, delaunay_triangulate
from .scm import ScmMap, build_rectangle_map, transfer_point
from .transfer import CommandPair, LearnerLimits, PairStore, transfer, update_limits
from .vehicle import Command, CommandBounds, LearnerSpec, Pose, Warp, step_learner, step_teacher

__version__ = "0.1.0"

__all__ = [
    "Command",
    "CommandBounds",
    "CommandPair",
    "ConfigError",
    "DegenerateInput",
    "EmptyLibrary",
    "InconsistentMotion",
    "Infeasible",
    "LearnerLimits",
    "LearnerSpec",
    "NonConvergence",
    "OutsideSourcePolygon",
    "PairStore",
    "Polygon2",
    "Pose",
    "ScmMap",
    "ScmTransferError",
    "Warp",
    "build_rectangle_map",
    "convex_hull",
    "delaunay_triangulate",
    "step_learner",
    "step_teacher",
    "transfer",
    "transfer_point",
    "update_limits",
]
