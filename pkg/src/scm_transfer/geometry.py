"""Planar geometry: Delaunay triangulation, point location, hulls, polygon tests.

All predicates run on coordinates normalized to the unit box of the input so
that the absolute tolerance ``EPS`` means the same thing for command domains
in m/s and in rad/s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput

EPS = 1e-12
MERGE_TOL = 1e-9


def as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegenerateInput(f"expected an (n, 2) array of points, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise DegenerateInput("points must be finite")
    return pts


@dataclass(frozen=True)
class Polygon2:
    """Ordered polygon vertices, counterclockwise for every consumer in this package."""

    vertices: np.ndarray

    def __post_init__(self):
        v = as_points(self.vertices)
        if len(v) < 3:
            raise DegenerateInput("a polygon needs at least 3 vertices")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self):
        return len(self.vertices)

    @property
    def signed_area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    @property
    def area(self) -> float:
        return abs(self.signed_area)

    @property
    def is_ccw(self) -> bool:
        return self.signed_area > 0

    @property
    def diameter(self) -> float:
        d = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.sqrt((d**2).sum(-1)).max())

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def as_complex(self) -> np.ndarray:
        return self.vertices[:, 0] + 1j * self.vertices[:, 1]


class _Frame:
    """Affine map of a point set onto [0, 1]^2 (uniform scale)."""

    def __init__(self, pts: np.ndarray):
        self.origin = pts.min(axis=0)
        extent = float((pts.max(axis=0) - self.origin).max())
        self.scale = extent if extent > 0 else 1.0

    def __call__(self, pts) -> np.ndarray:
        return (np.asarray(pts, dtype=float) - self.origin) / self.scale


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _orient_tol(a, b, c) -> float:
    """Tolerance on _orient scaled by the edge lengths involved, so sliver configurations are judged by angle."""
    ab = float(np.hypot(b[0] - a[0], b[1] - a[1]))
    far = max(float(np.hypot(c[0] - a[0], c[1] - a[1])), float(np.hypot(c[0] - b[0], c[1] - b[1])))
    return EPS * ab * far


def _incircle(a, b, c, d) -> float:
    """Positive when d is strictly inside the circle through CCW a, b, c."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]
    ad = adx * adx + ady * ady
    bd = bdx * bdx + bdy * bdy
    cd = cdx * cdx + cdy * cdy
    return (
        adx * (bdy * cd - bd * cdy)
        - ady * (bdx * cd - bd * cdx)
        + ad * (bdx * cdy - bdy * cdx)
    )


@dataclass(frozen=True)
class Triangulation:
    """Triangles index into ``points``; ``neighbors[t, k]`` is opposite vertex k (-1 on the hull)."""

    points: np.ndarray
    triangles: np.ndarray
    neighbors: np.ndarray
    _frame: _Frame = field(repr=False, compare=False)

    def __len__(self):
        return len(self.triangles)

    def triangle_vertices(self, t: int) -> np.ndarray:
        return self.points[self.triangles[t]]

    def triangle_area(self, t: int) -> float:
        a, b, c = self.triangle_vertices(t)
        return 0.5 * _orient(a, b, c)


def _merge_duplicates(npts: np.ndarray) -> list[int]:
    """Indices of the points kept after merging near-duplicates (first occurrence wins)."""
    kept: list[int] = []
    for i, p in enumerate(npts):
        if kept:
            d = np.abs(npts[kept] - p).max(axis=1)
            if d.min() <= MERGE_TOL:
                continue
        kept.append(i)
    return kept


class _Builder:
    def __init__(self, npts: np.ndarray):
        self.p = npts
        self.tris: list[tuple[int, int, int] | None] = []
        self.edges: dict[tuple[int, int], int] = {}

    def add(self, a, b, c):
        t = len(self.tris)
        self.tris.append((a, b, c))
        self.edges[(a, b)] = t
        self.edges[(b, c)] = t
        self.edges[(c, a)] = t
        return t

    def kill(self, t):
        a, b, c = self.tris[t]
        for e in ((a, b), (b, c), (c, a)):
            if self.edges.get(e) == t:
                del self.edges[e]
        self.tris[t] = None

    def legalize(self, stack, ip):
        p = self.p
        while stack:
            u, v = stack.pop()
            t = self.edges.get((u, v))
            if t is None or ip not in self.tris[t]:
                continue
            t2 = self.edges.get((v, u))
            if t2 is None:
                continue
            d = next(k for k in self.tris[t2] if k != u and k != v)
            if _incircle(p[u], p[v], p[ip], p[d]) > EPS:
                self.kill(t)
                self.kill(t2)
                self.add(u, d, ip)
                self.add(d, v, ip)
                stack.append((u, d))
                stack.append((d, v))

    def insert(self, ip):
        p = self.p
        q = p[ip]
        for t, tri in enumerate(self.tris):
            if tri is None:
                continue
            a, b, c = tri
            edges = ((a, b), (b, c), (c, a))
            o = [_orient(p[i], p[j], q) for i, j in edges]
            tol = [_orient_tol(p[i], p[j], q) for i, j in edges]
            if any(o[k] < -tol[k] for k in range(3)):
                continue
            on_edge = [k for k in range(3) if abs(o[k]) <= tol[k]]
            if len(on_edge) >= 2:
                return  # coincides with a vertex
            self.kill(t)
            if not on_edge:
                self.add(a, b, ip)
                self.add(b, c, ip)
                self.add(c, a, ip)
                self.legalize([(a, b), (b, c), (c, a)], ip)
                return
            # rotate so the edge containing q is (a, b)
            k = on_edge[0]
            a, b, c = tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]
            self.add(b, c, ip)
            self.add(c, a, ip)
            stack = [(b, c), (c, a)]
            t2 = self.edges.get((b, a))
            if t2 is not None:
                d = next(m for m in self.tris[t2] if m != a and m != b)
                self.kill(t2)
                self.add(a, d, ip)
                self.add(d, b, ip)
                stack += [(a, d), (d, b)]
            self.legalize(stack, ip)
            return
        # outside the current hull: fan to every visible boundary edge
        visible = [
            (i, j)
            for (i, j) in list(self.edges)
            if (j, i) not in self.edges and _orient(p[i], p[j], q) < -_orient_tol(p[i], p[j], q)
        ]
        visible.sort()
        for i, j in visible:
            self.add(j, i, ip)
        self.legalize([(j, i) for i, j in visible], ip)


def delaunay_triangulate(points) -> Triangulation:
    """Delaunay triangulation by incremental insertion with Lawson flips.

    Points are inserted in index order and co-circular configurations are
    never flipped, so the result depends only on the input order.
    """
    pts = as_points(points)
    if len(pts) < 3:
        raise DegenerateInput("need at least 3 points to triangulate")
    frame = _Frame(pts)
    npts = frame(pts)
    kept = _merge_duplicates(npts)
    if len(kept) < 3:
        raise DegenerateInput("fewer than 3 distinct points")
    i0, i1 = kept[0], kept[1]
    i2 = next(
        (k for k in kept[2:] if abs(_orient(npts[i0], npts[i1], npts[k])) > _orient_tol(npts[i0], npts[i1], npts[k])),
        None,
    )
    if i2 is None:
        raise DegenerateInput("all points are collinear")

    b = _Builder(npts)
    if _orient(npts[i0], npts[i1], npts[i2]) > 0:
        b.add(i0, i1, i2)
    else:
        b.add(i0, i2, i1)
    for k in kept:
        if k not in (i0, i1, i2):
            b.insert(k)

    tris = []
    for tri in b.tris:
        if tri is None:
            continue
        r = int(np.argmin(tri))
        tris.append(tuple(tri[r:] + tri[:r]))
    tris.sort()
    tri_arr = np.array(tris, dtype=int).reshape(-1, 3)

    owner = {}
    for t, (a, bb, c) in enumerate(tris):
        owner[(a, bb)] = t
        owner[(bb, c)] = t
        owner[(c, a)] = t
    nbr = np.full_like(tri_arr, -1)
    for t, tri in enumerate(tris):
        for k in range(3):
            u, v = tri[(k + 1) % 3], tri[(k + 2) % 3]
            nbr[t, k] = owner.get((v, u), -1)

    pts = pts.copy()
    for arr in (pts, tri_arr, nbr):
        arr.setflags(write=False)
    return Triangulation(pts, tri_arr, nbr, frame)


def locate_triangle(tri: Triangulation, p) -> int | None:
    """Lowest-index triangle containing ``p`` (boundary inclusive), or None outside the hull."""
    q = tri._frame(np.asarray(p, dtype=float))
    npts = tri._frame(tri.points)
    for t, (a, b, c) in enumerate(tri.triangles):
        if (
            _orient(npts[a], npts[b], q) >= -EPS
            and _orient(npts[b], npts[c], q) >= -EPS
            and _orient(npts[c], npts[a], q) >= -EPS
        ):
            return t
    return None


def convex_hull(points) -> Polygon2:
    """Counterclockwise hull (Andrew's monotone chain), collinear boundary points dropped."""
    pts = as_points(points)
    if len(pts) < 3:
        raise DegenerateInput("need at least 3 points for a hull")
    npts = _Frame(pts)(pts)
    # near-duplicates would make the middle of a real turn look collinear
    # sort on snapped coordinates: sub-tolerance x differences must not override the y order
    snap = np.round(npts, 12)
    order = sorted(_merge_duplicates(npts), key=lambda i: (snap[i, 0], snap[i, 1]))

    def chain(idx):
        out: list[int] = []
        for i in idx:
            while len(out) >= 2 and _orient(npts[out[-2]], npts[out[-1]], npts[i]) <= _orient_tol(
                npts[out[-2]], npts[out[-1]], npts[i]
            ):
                out.pop()
            out.append(i)
        return out

    lower = chain(order)
    upper = chain(order[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateInput("points are collinear")
    return Polygon2(pts[hull])


def _on_segment(a, b, c, eps=EPS) -> bool:
    """c lies on the closed segment ab (c assumed collinear with ab)."""
    return (
        min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps
        and min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps
    )


def segments_intersect(p1, p2, q1, q2, eps=EPS) -> bool:
    """Closed-segment intersection test, touching counts."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    ):
        return True
    if abs(d1) <= eps and _on_segment(q1, q2, p1, eps):
        return True
    if abs(d2) <= eps and _on_segment(q1, q2, p2, eps):
        return True
    if abs(d3) <= eps and _on_segment(p1, p2, q1, eps):
        return True
    if abs(d4) <= eps and _on_segment(p1, p2, q2, eps):
        return True
    return False


def is_simple_polygon(poly: Polygon2) -> bool:
    """No edge crossings except where adjacent edges share their common vertex."""
    v = _Frame(poly.vertices)(poly.vertices)
    n = len(v)
    for i in range(n):
        if np.abs(v[(i + 1) % n] - v[i]).max() <= EPS:
            return False
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            c, d = v[j], v[(j + 1) % n]
            if j == i + 1 or (i == 0 and j == n - 1):
                # adjacent: fold-back along the shared line is the only failure
                shared, p_far, q_far = (b, a, d) if j == i + 1 else (a, b, c)
                if abs(_orient(p_far, shared, q_far)) <= EPS:
                    if _on_segment(shared, p_far, q_far) or _on_segment(shared, q_far, p_far):
                        return False
                continue
            if segments_intersect(a, b, c, d):
                return False
    return True


def point_in_polygon(poly: Polygon2, p) -> bool:
    """Boundary-inclusive containment by winding number."""
    frame = _Frame(poly.vertices)
    v = frame(poly.vertices)
    q = frame(np.asarray(p, dtype=float))
    n = len(v)
    wn = 0
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        o = _orient(a, b, q)
        if abs(o) <= EPS and _on_segment(a, b, q):
            return True
        if a[1] <= q[1]:
            if b[1] > q[1] and o > 0:
                wn += 1
        elif b[1] <= q[1] and o < 0:
            wn -= 1
    return wn != 0


def distance_to_boundary(poly: Polygon2, p) -> float:
    """Euclidean distance from ``p`` to the polygon boundary."""
    v = poly.vertices
    q = np.asarray(p, dtype=float)
    a = v
    b = np.roll(v, -1, axis=0)
    ab = b - a
    t = np.clip(((q - a) * ab).sum(1) / np.maximum((ab**2).sum(1), 1e-300), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return float(np.sqrt(((proj - q) ** 2).sum(1)).min())
