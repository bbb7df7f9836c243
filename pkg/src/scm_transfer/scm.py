"""Schwarz-Christoffel maps between quadrilaterals and rectangles.

A quadrilateral w1..w4 (counterclockwise) is the image of the bi-infinite
strip 0 <= Im z <= 1 under

    f(z) = C + A * int_0^z prod_j g_j(s)^(alpha_j - 1) ds

with prevertices z1 = 0, z2 = L on the lower edge and z3 = L + i, z4 = i on
the upper one; g_j is sinh(pi (s - x_j) / 2) for lower prevertices and
cosh(pi (s - x_j) / 2) for upper prevertices. The ends of the strip map to
interior points of sides w4w1 and w2w3. This symmetric layout is exactly the
image of a rectangle under z = log(sn(q | m)) / pi with m = exp(-2 pi L),
so the only unknown of the parameter problem is the gap L.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .elliptic import ellipj, inverse_sn
from .errors import (
    CrowdingWarning,
    DegenerateInput,
    NonConvergence,
    OutOfDomain,
    OutsideSourcePolygon,
    QuadratureFailure,
)
from .geometry import Polygon2, distance_to_boundary, is_simple_polygon, point_in_polygon

QUAD_NODES = 12
MAX_DEPTH = 30
MAX_PARAM_ITER = 200
MAX_NEWTON = 100
MAX_RESTARTS = 8
CROWDING_GAP = 1e-10
# quads needing a longer strip section have conformal modulus beyond ~MAX_GAP / 2
MAX_GAP = 64.0
END_CUTOFF = 12.0  # exp(-pi * 12) ~ 4e-17: the strip ends are numerically reached

# ---------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=256)
def _gauss_jacobi(beta_b: float, beta_a: float):
    """Nodes/weights for weight (1 - x)^beta_b (1 + x)^beta_a on [-1, 1]."""
    # a + b = -1 trips a harmless 0/0 in scipy's recurrence setup
    with np.errstate(divide="ignore", invalid="ignore"):
        x, w = roots_jacobi(QUAD_NODES, beta_b, beta_a)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
        raise QuadratureFailure(f"Gauss-Jacobi rule unavailable for exponents {beta_b}, {beta_a}")
    return x, w


def _seg_distance(a: complex, b: complex, p: complex) -> float:
    ab = b - a
    denom = (ab * ab.conjugate()).real
    if denom == 0.0:
        return abs(p - a)
    t = ((p - a) * ab.conjugate()).real / denom
    t = min(1.0, max(0.0, t))
    return abs(p - (a + t * ab))


def _log_sinh_cosh(s: np.ndarray, hyperbolic_cos: bool) -> np.ndarray:
    """Principal log of sinh(s) or cosh(s) without overflow for large |Re s|."""
    flip = s.real < 0
    t = np.where(flip, -s, s)
    sign = 1.0 if hyperbolic_cos else -1.0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        lg = t - math.log(2.0) + np.log1p(sign * np.exp(-2.0 * t))
    if not hyperbolic_cos:
        # sinh is odd
        lg = np.where(flip, lg + 1j * np.pi, lg)
    im = np.mod(lg.imag + np.pi, 2.0 * np.pi) - np.pi
    im = np.where(im == -np.pi, np.pi, im)
    return lg.real + 1j * im


def _strip_factors(prevertices: np.ndarray, betas: np.ndarray, zeta: np.ndarray, offsets=None) -> np.ndarray:
    """prod_j g_j(zeta)^beta_j, principal branches (continuous on the closed strip).

    ``offsets`` maps a prevertex index to zeta - z_j computed by the caller;
    next to a quadrature endpoint forming that difference here would cancel.
    """
    offsets = offsets or {}
    if np.max(np.abs(zeta.real - prevertices[0].real)) < 300.0:
        out = np.ones_like(zeta, dtype=complex)
        for j, (zj, bj) in enumerate(zip(prevertices, betas)):
            if bj == 0.0:
                continue
            if j in offsets:
                # cosh(pi/2 (zeta - Re z_j)) = i sinh(pi/2 (zeta - z_j)) for top prevertices
                d = offsets[j]
                # adding 0.0 turns a -0.0 imaginary part into +0.0, keeping the branch of the bottom edge
                g = np.sinh(0.5 * np.pi * (d.real + 1j * (d.imag + 0.0)))
                out *= (1j * g if zj.imag != 0.0 else g) ** bj
                continue
            s = 0.5 * np.pi * (zeta - zj.real)
            out *= (np.cosh(s) if zj.imag != 0.0 else np.sinh(s)) ** bj
        return out
    # far down the strip the individual factors overflow; sum their logs instead
    acc = np.zeros_like(zeta, dtype=complex)
    for zj, bj in zip(prevertices, betas):
        if bj == 0.0:
            continue
        s = 0.5 * np.pi * (zeta - zj.real)
        acc += bj * _log_sinh_cosh(s, zj.imag != 0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.exp(acc)


def _integrate(prevertices, betas, a, b, ja=-1, jb=-1, depth=0) -> complex:
    """Integral of the strip integrand along the segment a -> b.

    ``ja``/``jb`` mark an endpoint that coincides with prevertex j; its
    singularity is absorbed into a Gauss-Jacobi weight. Subintervals are
    bisected until every other prevertex is at least one subinterval length
    away from them.
    """
    length = abs(b - a)
    if length == 0.0:
        return 0j
    dist = math.inf
    for j, zj in enumerate(prevertices):
        if j == ja or j == jb or betas[j] == 0.0:
            continue
        dist = min(dist, _seg_distance(a, b, zj))
    if dist < length:
        if depth >= MAX_DEPTH:
            raise QuadratureFailure(f"subdivision depth {MAX_DEPTH} exceeded near {a}->{b}")
        mid = 0.5 * (a + b)
        return _integrate(prevertices, betas, a, mid, ja, -1, depth + 1) + _integrate(
            prevertices, betas, mid, b, -1, jb, depth + 1
        )
    beta_a = float(betas[ja]) if ja >= 0 else 0.0
    beta_b = float(betas[jb]) if jb >= 0 else 0.0
    x, w = _gauss_jacobi(beta_b, beta_a)
    half = 0.5 * (b - a)
    zeta = 0.5 * (a + b) + half * x
    offsets = {}
    if ja >= 0:
        offsets[ja] = half * (1.0 + x)
    if jb >= 0:
        offsets[jb] = -half * (1.0 - x)
    vals = _strip_factors(prevertices, betas, zeta, offsets)
    if beta_a:
        vals = vals / (1.0 + x) ** beta_a
    if beta_b:
        vals = vals / (1.0 - x) ** beta_b
    return complex(half * np.dot(w, vals))


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class RectangleDomain:
    """Canonical rectangle [0, width] x [0, height]; height is normalized to 1."""

    width: float
    height: float
    modulus_m: float
    K: float = field(repr=False)
    Kp: float = field(repr=False)

    @classmethod
    def from_gap(cls, gap: float) -> "RectangleDomain":
        m = math.exp(-2.0 * math.pi * gap)
        m1 = -math.expm1(-2.0 * math.pi * gap)
        K = _K_complement(m1)
        Kp = _K_complement(m)
        return cls(width=Kp / (2.0 * K), height=1.0, modulus_m=m, K=K, Kp=Kp)


def _K_complement(m1: float) -> float:
    """K(1 - m1), computed from the complementary parameter to keep precision as m -> 1."""
    a, b = 1.0, math.sqrt(m1)
    for _ in range(64):
        if abs(a - b) <= 1e-16 * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return math.pi / (a + b)


@dataclass(frozen=True)
class StripMapParams:
    """Solved strip-to-polygon map. Vertex k of ``target`` is the image of ``prevertices[k]``."""

    prevertices: np.ndarray
    interior_angle_fractions: np.ndarray
    scale_constant: complex
    offset_constant: complex
    target: Polygon2
    order: tuple
    side_residual: float
    center: complex = field(repr=False)
    center_image: complex = field(repr=False)
    end_images: tuple = field(repr=False)

    @property
    def gap(self) -> float:
        return float(self.prevertices[1].real)

    @property
    def betas(self) -> np.ndarray:
        return self.interior_angle_fractions - 1.0

    @property
    def target_complex(self) -> np.ndarray:
        return self.target.as_complex()


def interior_angle_fractions(poly: Polygon2) -> np.ndarray:
    w = poly.as_complex()
    incoming = w - np.roll(w, 1)
    outgoing = np.roll(w, -1) - w
    turn = np.angle(outgoing / incoming)
    return 1.0 - turn / np.pi


def _side_integrals(prevertices, betas):
    n = len(prevertices)
    return np.array(
        [
            _integrate(prevertices, betas, prevertices[k], prevertices[(k + 1) % n], k, (k + 1) % n)
            for k in range(n)
        ]
    )


def _layout(gap: float) -> np.ndarray:
    return np.array([0.0, gap, gap + 1j, 1j], dtype=complex)


def _check_quad(poly: Polygon2):
    if len(poly) != 4:
        raise DegenerateInput("rectangle maps are restricted to quadrilaterals")
    if not poly.is_ccw:
        raise DegenerateInput("polygon must be counterclockwise")
    if not is_simple_polygon(poly):
        raise DegenerateInput("polygon must be simple")


def solve_strip_parameters(poly: Polygon2, corners=(0, 1, 2, 3)) -> StripMapParams:
    """Solve the parameter problem for a quadrilateral by damped Gauss-Newton on log(L).

    ``corners`` lists the polygon vertices in the order they are assigned to
    prevertices 0, L, L + i, i; it must be a cyclic rotation of (0, 1, 2, 3).
    """
    _check_quad(poly)
    corners = tuple(int(c) for c in corners)
    if sorted(corners) != [0, 1, 2, 3] or any(
        (corners[(k + 1) % 4] - corners[k]) % 4 != 1 for k in range(4)
    ):
        raise DegenerateInput("corners must be a cyclic rotation of the vertex order")
    target = Polygon2(poly.vertices[list(corners)])
    w = target.as_complex()
    alphas = interior_angle_fractions(target)
    betas = alphas - 1.0
    sides = np.abs(np.roll(w, -1) - w)
    goal = np.log(sides[1:] / sides[0])

    def residual(u):
        I = _side_integrals(_layout(math.exp(u)), betas)
        mags = np.abs(I)
        return np.log(mags[1:] / mags[0]) - goal

    u = 0.0  # L = 1: prevertices spaced like the strip width
    r = residual(u)
    cost = float(r @ r)
    converged = False
    u_cap = math.log(MAX_GAP)
    pinned = 0
    for _ in range(MAX_PARAM_ITER):
        h = 1e-6
        jac = (residual(u + h) - residual(u - h)) / (2 * h)
        denom = float(jac @ jac)
        if denom == 0.0:
            break
        step = -float(jac @ r) / denom
        step = max(-2.0, min(2.0, step))
        lam = 1.0
        while True:
            u_new = min(u + lam * step, u_cap)
            r_new = residual(u_new)
            cost_new = float(r_new @ r_new)
            if cost_new <= cost or lam < 1e-6:
                break
            lam *= 0.5
        u, r, cost_prev, cost = u_new, r_new, cost, cost_new
        pinned = pinned + 1 if u > u_cap - 1e-2 else 0
        if pinned >= 3:
            break
        if abs(lam * step) < 1e-13 or cost < 1e-30 or (cost_prev - cost) <= 1e-32 and cost < 1e-24:
            converged = True
            break
    gap = math.exp(u)
    if pinned and not converged:
        raise NonConvergence(f"quadrilateral too elongated: prevertex gap would exceed {MAX_GAP}")
    prev = _layout(gap)
    I = _side_integrals(prev, betas)
    rel = np.abs(np.abs(I) * sides[0] / abs(I[0]) / sides - 1.0)
    side_residual = float(rel.max())
    if not converged and side_residual > 1e-8:
        raise NonConvergence(
            f"parameter problem did not converge in {MAX_PARAM_ITER} iterations (residual {side_residual:.2e})"
        )
    if gap < CROWDING_GAP:
        warnings.warn(f"prevertex gap {gap:.3e} is below {CROWDING_GAP}", CrowdingWarning, stacklevel=2)

    A = (w[1] - w[0]) / I[0]
    C = complex(w[0])
    center = 0.5 * gap + 0.5j
    center_image = C + A * _integrate(prev, betas, prev[0], center, 0, -1)
    ends = []
    for x_end in (-END_CUTOFF, gap + END_CUTOFF):
        z_end = x_end + 0.5j
        ends.append(center_image + A * _integrate(prev, betas, center, z_end))
    return StripMapParams(
        prevertices=prev,
        interior_angle_fractions=alphas,
        scale_constant=complex(A),
        offset_constant=C,
        target=target,
        order=corners,
        side_residual=side_residual,
        center=center,
        center_image=complex(center_image),
        end_images=tuple(ends),
    )


def _derivative(params: StripMapParams, z: complex) -> complex:
    vals = _strip_factors(params.prevertices, params.betas, np.array([z]))
    return complex(params.scale_constant * vals[0])


def _anchors(params: StripMapParams):
    """(strip point, image, prevertex index or -1) pairs with known images."""
    w = params.target_complex
    out = [(params.center, params.center_image, -1)]
    out += [(params.prevertices[k], complex(w[k]), k) for k in range(4)]
    return out


def _forward_one(params: StripMapParams, z: complex) -> complex:
    gap = params.gap
    if z.real < -END_CUTOFF:
        return params.end_images[0]
    if z.real > gap + END_CUTOFF:
        return params.end_images[1]
    best = None
    for za, wa, ja in _anchors(params):
        d = abs(z - za)
        if ja >= 0 and d == 0.0:
            return wa
        if best is None or d < best[0]:
            best = (d, za, wa, ja)
    _, za, wa, ja = best
    return wa + params.scale_constant * _integrate(params.prevertices, params.betas, za, z, ja, -1)


def strip_to_polygon(params: StripMapParams, z):
    """Forward map from the strip into the polygon (scalar or array input)."""
    zz = np.asarray(z, dtype=complex)
    if np.any(zz.imag < -1e-12) or np.any(zz.imag > 1 + 1e-12):
        raise OutOfDomain("strip points need 0 <= Im z <= 1")
    flat = np.clip(zz.imag, 0.0, 1.0)
    flat = (zz.real + 1j * flat).ravel()
    out = np.array([_forward_one(params, complex(v)) for v in flat]).reshape(zz.shape)
    return complex(out) if out.ndim == 0 else out


def _clamp_strip(z: complex) -> complex:
    return complex(z.real, min(1.0 - 1e-15, max(1e-15, z.imag)))


def _inv_derivative(params: StripMapParams, z: complex) -> complex:
    d = _derivative(params, z)
    if d == 0 or not cmath.isfinite(d):
        raise NonConvergence(f"map derivative vanishes or overflows at {z}")
    inv = 1.0 / d
    if not cmath.isfinite(inv):
        # far out along the strip the derivative decays below 1 / DBL_MAX
        raise NonConvergence(f"map derivative underflows at {z}")
    return inv


def _march(params: StripMapParams, z0: complex, w0: complex, w: complex, steps: int) -> complex:
    """RK4 on dz/dt = (w - w0) / f'(z) from (z0, w0) toward the target image w."""
    dw = w - w0
    h = 1.0 / steps
    z = z0
    for _ in range(steps):
        k1 = dw * _inv_derivative(params, z)
        k2 = dw * _inv_derivative(params, _clamp_strip(z + 0.5 * h * k1))
        k3 = dw * _inv_derivative(params, _clamp_strip(z + 0.5 * h * k2))
        k4 = dw * _inv_derivative(params, _clamp_strip(z + h * k3))
        z = _clamp_strip(z + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0)
    return z


def _advance(params: StripMapParams, z: complex, fz: complex, z_new: complex) -> complex:
    """f(z_new) from a known f(z); restart from an anchor when the step ends near a prevertex."""
    if np.min(np.abs(params.prevertices - z_new)) < abs(z_new - z):
        return _forward_one(params, z_new)
    return fz + params.scale_constant * _integrate(params.prevertices, params.betas, z, z_new)


def _newton(params: StripMapParams, z: complex, w: complex, tol: float):
    fz = _forward_one(params, z)
    for _ in range(MAX_NEWTON):
        err = fz - w
        if abs(err) <= tol:
            return z, fz
        if not cmath.isfinite(err):
            raise NonConvergence(f"non-finite map value at {z}")
        step = err * _inv_derivative(params, z)
        lam = 1.0
        while True:
            z_new = z - lam * step
            if 0.0 < z_new.imag < 1.0:
                break
            lam *= 0.5
            if lam < 1e-12:
                return z, fz
        f_new = _advance(params, z, fz, z_new)
        if abs(f_new - w) > abs(err) and lam > 1e-3:
            # mild backtracking keeps the iteration from bouncing off corners
            lam *= 0.5
            z_new = z - lam * step
            f_new = _advance(params, z, fz, z_new)
        z, fz = z_new, f_new
        if abs(lam * step) < 1e-15 * max(1.0, abs(z)):
            break
    return z, fz


def polygon_to_strip(params: StripMapParams, w):
    """Inverse map: ODE march for a seed, then Newton; residual-gated."""
    ww = np.asarray(w, dtype=complex)
    if ww.ndim == 0:
        return _inverse_one(params, complex(ww))
    return np.array([_inverse_one(params, complex(v)) for v in ww.ravel()]).reshape(ww.shape)


def _inverse_one(params: StripMapParams, w: complex) -> complex:
    target = params.target
    diam = target.diameter
    pt = (w.real, w.imag)
    if not point_in_polygon(target, pt) or distance_to_boundary(target, pt) <= 1e-10 * diam:
        raise OutsideSourcePolygon(f"{w} is not strictly inside the polygon")
    tol = 1e-13 * diam
    gate = 1e-9 * diam
    wv = params.target_complex
    # seeds: the conformal center first, then points pulled toward each vertex
    seeds = [(params.center, params.center_image)]
    for k in range(4):
        zk = params.prevertices[k]
        za = params.center + 0.5 * (zk - params.center)
        seeds.append((za, None))
    best = None
    for attempt in range(MAX_RESTARTS + 1):
        za, wa = seeds[attempt % len(seeds)]
        if wa is None:
            wa = _forward_one(params, za)
            seeds[attempt % len(seeds)] = (za, wa)
        steps = 6 * (1 + attempt // len(seeds))
        try:
            z0 = _march(params, za, wa, w, steps)
            z, _ = _newton(params, z0, w, tol)
            res = abs(_forward_one(params, z) - w)
        except (NonConvergence, QuadratureFailure):
            continue
        if not math.isfinite(res):
            continue
        if best is None or res < best[1]:
            best = (z, res)
        if res <= gate:
            return z
    res = math.inf if best is None else best[1]
    raise NonConvergence(f"inverse map failed at {w}: residual {res:.2e} after {MAX_RESTARTS} restarts")


# ---------------------------------------------------------------------------
# strip <-> rectangle


def rect_to_strip(r, rect: RectangleDomain):
    """z = log(sn(q | m)) / pi with q = K + 2iK r, r in [0, width] x [0, 1]."""
    rr = np.asarray(r, dtype=complex)
    tol = 1e-12
    if (
        np.any(rr.real < -tol)
        or np.any(rr.real > rect.width * (1 + tol) + tol)
        or np.any(rr.imag < -tol)
        or np.any(rr.imag > 1 + tol)
    ):
        raise OutOfDomain("point lies outside the rectangle")
    q = rect.K + 2j * rect.K * rr
    sn = ellipj(q, rect.modulus_m)[0]
    with np.errstate(divide="ignore"):
        z = np.log(sn) / np.pi
    # top-edge rounding can give Im(sn) = -0 and a spurious -i
    z = z.real + 1j * np.clip(np.where(z.imag < -0.5, z.imag + 2.0, z.imag), 0.0, 1.0)
    return complex(z) if z.ndim == 0 else z


def strip_to_rect(z, rect: RectangleDomain):
    """Inverse of :func:`rect_to_strip` via the incomplete elliptic integral."""
    zz = np.asarray(z, dtype=complex)
    if np.any(zz.imag < -1e-12) or np.any(zz.imag > 1 + 1e-12):
        raise OutOfDomain("strip points need 0 <= Im z <= 1")
    y = np.clip(zz.imag, 0.0, 1.0)
    with np.errstate(over="ignore"):
        zeta = np.exp(np.pi * zz.real) * (np.cos(np.pi * y) + 1j * np.sin(np.pi * y))
    zeta = np.where(y == 1.0, -np.exp(np.pi * zz.real) + 0j, zeta)
    q = inverse_sn(zeta, rect.modulus_m)
    r = (q - rect.K) / (2j * rect.K)
    r = np.clip(r.real, 0.0, rect.width) + 1j * np.clip(r.imag, 0.0, 1.0)
    return complex(r) if r.ndim == 0 else r


# ---------------------------------------------------------------------------
# composed maps


def _rotate_square(s: complex, quarter_turns: int) -> complex:
    x, y = s.real, s.imag
    for _ in range(quarter_turns % 4):
        x, y = 1.0 - y, x
    return complex(x, y)


@dataclass(frozen=True)
class ScmMap:
    """Conformal map of a quadrilateral onto its canonical rectangle."""

    strip_params: StripMapParams
    rectangle: RectangleDomain
    corner_indices: tuple
    polygon: Polygon2

    def polygon_to_rect(self, w):
        return strip_to_rect(polygon_to_strip(self.strip_params, w), self.rectangle)

    def rect_to_polygon(self, r):
        rr = np.asarray(r, dtype=complex)
        z = np.asarray(rect_to_strip(rr, self.rectangle), dtype=complex)
        # near a corner the map is Hoelder-singular, so the few-ulp drift of
        # rect_to_strip there is amplified; snap corners onto their prevertex
        width = self.rectangle.width
        tol = 1e-12 * max(1.0, width)
        for rc, zj in zip((0.0, width, width + 1j, 1j), self.strip_params.prevertices):
            z = np.where(np.abs(rr - rc) <= tol, zj, z)
        return strip_to_polygon(self.strip_params, complex(z) if z.ndim == 0 else z)

    def to_square(self, w) -> complex:
        """Unit-square coordinates with polygon vertex 0 at (0, 0), vertex 1 at (1, 0), ..."""
        r = self.polygon_to_rect(complex(w))
        s = complex(r.real / self.rectangle.width, r.imag / self.rectangle.height)
        return _rotate_square(s, self.corner_indices[0])

    def from_square(self, s) -> complex:
        s = _rotate_square(complex(s), -self.corner_indices[0])
        s = complex(min(1.0, max(0.0, s.real)), min(1.0, max(0.0, s.imag)))
        r = complex(s.real * self.rectangle.width, s.imag * self.rectangle.height)
        return complex(self.rect_to_polygon(r))


def build_rectangle_map(poly: Polygon2) -> ScmMap:
    """Solve the rectangle map, labeling corners so the longer opposite sides lie on the strip edges.

    Putting the longer sides on the prevertex edges keeps the gap L away from
    zero, where prevertices would crowd.
    """
    _check_quad(poly)
    w = poly.as_complex()
    sides = np.abs(np.roll(w, -1) - w)
    start = 0 if sides[0] + sides[2] >= sides[1] + sides[3] else 1
    corners = tuple((start + k) % 4 for k in range(4))
    params = solve_strip_parameters(poly, corners)
    rect = RectangleDomain.from_gap(params.gap)
    return ScmMap(strip_params=params, rectangle=rect, corner_indices=corners, polygon=poly)


def transfer_point(map_T: ScmMap, map_L: ScmMap, w_T) -> complex:
    """Teacher polygon -> rectangle -> unit square -> learner rectangle -> learner polygon."""
    w_T = complex(w_T)
    poly = map_T.polygon
    pt = (w_T.real, w_T.imag)
    if not point_in_polygon(poly, pt) or distance_to_boundary(poly, pt) <= 1e-10 * poly.diameter:
        raise OutsideSourcePolygon(f"{w_T} is not strictly inside the source polygon")
    return map_L.from_square(map_T.to_square(w_T))
