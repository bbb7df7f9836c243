"""Shared fixtures-as-functions for the test modules."""

from __future__ import annotations

import functools
import math

import numpy as np

from scm_transfer.geometry import Polygon2, distance_to_boundary, point_in_polygon


def random_convex_quad(rng) -> Polygon2:
    """Counterclockwise convex quadrilateral with a random similarity applied."""
    while True:
        ang = np.sort(rng.uniform(0.0, 2 * np.pi, 4))
        gaps = np.diff(np.r_[ang, ang[0] + 2 * np.pi])
        if gaps.min() < 0.5 or gaps.max() > np.pi - 0.2:
            continue
        rad = rng.uniform(0.6, 1.4, 4)
        P = np.c_[rad * np.cos(ang), rad * np.sin(ang)]
        e = np.roll(P, -1, 0) - P
        f = np.roll(e, -1, 0)
        cross = e[:, 0] * f[:, 1] - e[:, 1] * f[:, 0]
        if cross.min() <= 0.05:
            continue
        # interior angles away from 0 and pi keep the test about the solver, not crowding
        scale = rng.uniform(0.2, 5.0)
        shift = rng.uniform(-3, 3, 2)
        return Polygon2(P * scale + shift)


def interior_samples(poly: Polygon2, rng, n: int, margin: float = 1e-3) -> np.ndarray:
    """Uniform rejection samples at least ``margin * diameter`` from the boundary."""
    lo, hi = poly.vertices.min(0), poly.vertices.max(0)
    out = []
    while len(out) < n:
        p = rng.uniform(lo, hi)
        if point_in_polygon(poly, p) and distance_to_boundary(poly, p) > margin * poly.diameter:
            out.append(complex(*p))
    return np.array(out)


def far_from_corners(poly: Polygon2, rng, n: int, frac: float = 0.05) -> np.ndarray:
    out = []
    w = poly.as_complex()
    while len(out) < n:
        (z,) = interior_samples(poly, rng, 1, margin=0.02)
        if np.min(np.abs(w - z)) >= frac * poly.diameter:
            out.append(z)
    return np.array(out)


def conformality(m, w: complex, h: float = 1e-5):
    """(angle in degrees, length ratio) of the images of two orthogonal displacements."""
    d = h * m.polygon.diameter
    r0 = m.polygon_to_rect(w)
    a = m.polygon_to_rect(w + d) - r0
    b = m.polygon_to_rect(w + 1j * d) - r0
    ang = abs(math.degrees(np.angle(b / a)))
    return ang, abs(b) / abs(a)


def scm_suite(quads: int = 100, points: int = 100, probes: int = 4, seed: int = 0) -> dict:
    """Worst-case numerics of the rectangle map over random convex quadrilaterals."""
    from scm_transfer.scm import build_rectangle_map

    rng = np.random.default_rng(seed)
    worst = {"side_residual": 0.0, "round_trip": 0.0, "round_trip_abs": 0.0, "angle_dev": 0.0, "ratio_dev": 0.0, "corner": 0.0}
    for _ in range(quads):
        poly = random_convex_quad(rng)
        m = build_rectangle_map(poly)
        diam = poly.diameter
        worst["side_residual"] = max(worst["side_residual"], m.strip_params.side_residual)
        for w in interior_samples(poly, rng, points):
            back = m.rect_to_polygon(m.polygon_to_rect(w))
            worst["round_trip"] = max(worst["round_trip"], abs(back - w) / diam)
            worst["round_trip_abs"] = max(worst["round_trip_abs"], abs(back - w))
        for w in far_from_corners(poly, rng, probes):
            ang, ratio = conformality(m, w)
            worst["angle_dev"] = max(worst["angle_dev"], abs(ang - 90.0))
            worst["ratio_dev"] = max(worst["ratio_dev"], abs(ratio - 1.0))
        rect = m.rectangle
        wv = poly.as_complex()
        for c in (0.0, rect.width, rect.width + 1j, 1j):
            worst["corner"] = max(worst["corner"], np.min(np.abs(wv - m.rect_to_polygon(c))) / diam)
    return worst


def identity_scenario_dict(calibration_steps: int = 200) -> dict:
    """The S-path MPC scenario with a noise-free learner identical to the teacher.

    The learner is calibrated on a 10x10 command lattice (capped at
    ``calibration_steps`` single-step observations) before the task.
    """
    import copy

    from scm_transfer.harness.scenario import load_preset

    d = copy.deepcopy(load_preset("table2_mpc").raw)
    d["name"] = "identity_learner"
    d["learner"] = {"bounds": list(d["teacher"]["bounds"]), "noise_sigma": 0.0}
    d["transfer"] = {
        "policy": "scm",
        "grid": [4, 4],
        "k_min": 5,
        "calibration": {"grid": [10, 10], "repeats": 2, "hold_steps": 1, "max_steps": calibration_steps},
    }
    return d


def alignments(n, m):
    """Every monotone warping path from (0, 0) to (n - 1, m - 1)."""

    @functools.lru_cache(maxsize=None)
    def paths(i, j):
        if (i, j) == (0, 0):
            return (((0, 0),),)
        out = []
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            a, b = i - di, j - dj
            if a >= 0 and b >= 0:
                out.extend(p + ((i, j),) for p in paths(a, b))
        return tuple(out)

    return paths(n - 1, m - 1)


def dtw_brute(a, b):
    """DTW as the minimum over every explicit alignment (exponential; short sequences only)."""
    a, b = np.asarray(a)[:, :2], np.asarray(b)[:, :2]
    return min(sum(math.dist(a[i], b[j]) for i, j in p) for p in alignments(len(a), len(b)))
