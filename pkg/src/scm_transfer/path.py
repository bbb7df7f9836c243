"""Waypoint polylines: arc length, nearest-point queries, resampling."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


class Polyline:
    def __init__(self, waypoints):
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ConfigError("a path needs at least two (x, y) waypoints")
        seg = np.diff(pts, axis=0)
        seglen = np.hypot(seg[:, 0], seg[:, 1])
        keep = np.concatenate([[True], seglen > 1e-12])
        pts = pts[keep]
        if len(pts) < 2:
            raise ConfigError("path is degenerate")
        self.points = pts
        self.points.flags.writeable = False
        seg = np.diff(pts, axis=0)
        self._seg = seg
        self._seglen = np.hypot(seg[:, 0], seg[:, 1])
        self.cumlen = np.concatenate([[0.0], np.cumsum(self._seglen)])

    @property
    def length(self) -> float:
        return float(self.cumlen[-1])

    @property
    def goal(self) -> np.ndarray:
        return self.points[-1]

    def project(self, p):
        """(distance, arc length) of the nearest path point to p; earliest segment on ties."""
        p = np.asarray(p, dtype=float)[:2]
        rel = p - self.points[:-1]
        t = np.clip(np.einsum("ij,ij->i", rel, self._seg) / self._seglen**2, 0.0, 1.0)
        foot = self.points[:-1] + t[:, None] * self._seg
        d = np.hypot(*(foot - p).T)
        k = int(np.argmin(d))
        return float(d[k]), float(self.cumlen[k] + t[k] * self._seglen[k])

    def distance(self, p) -> float:
        return self.project(p)[0]

    def point_at(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        k = np.clip(np.searchsorted(self.cumlen, s, side="right") - 1, 0, len(self._seglen) - 1)
        t = (s - self.cumlen[k]) / self._seglen[k]
        return self.points[k] + t[..., None] * self._seg[k]

    def heading_at(self, s):
        s = np.clip(np.asarray(s, dtype=float), 0.0, self.length)
        k = np.clip(np.searchsorted(self.cumlen, s, side="right") - 1, 0, len(self._seglen) - 1)
        return np.arctan2(self._seg[k, 1], self._seg[k, 0])


def polyline_distance(points, p) -> float:
    """Distance from p to a polyline given as an (n, 2) array (single points allowed)."""
    pts = np.asarray(points, dtype=float)[:, :2]
    p = np.asarray(p, dtype=float)[:2]
    if len(pts) == 1:
        return float(np.hypot(*(pts[0] - p)))
    a, b = pts[:-1], pts[1:]
    ab = b - a
    den = np.einsum("ij,ij->i", ab, ab)
    t = np.where(den > 0, np.einsum("ij,ij->i", p - a, ab) / np.where(den > 0, den, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    foot = a + t[:, None] * ab
    return float(np.min(np.hypot(*(foot - p).T)))


def s_path(length: float = 6.0, amplitude: float = 1.0, lobes: int = 2, n: int = 121) -> np.ndarray:
    """Sinusoid-like S-shaped waypoint polyline along +x."""
    x = np.linspace(0.0, length, n)
    y = amplitude * np.sin(np.pi * lobes * x / length)
    return np.column_stack([x, y])
