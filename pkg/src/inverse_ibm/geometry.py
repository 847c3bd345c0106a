"""Analytic immersed boundaries.

Each geometry exposes a level-set function (negative inside, zero on the
boundary), a counterclockwise parameterization of its boundary and an
arc-length inverse used to cut the boundary into uniform segments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil

import numpy as np
import shapely
from scipy.spatial import cKDTree

from inverse_ibm.dg.quadrature import gauss_segment

TWO_PI = 2.0 * np.pi


class GeometryError(ValueError):
    pass


def _as_points(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1, 2)


def point_segment_distance(x: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from points ``x`` to segments ``[a, b]`` (broadcasting)."""
    d = b - a
    dd = np.einsum("...k,...k->...", d, d)
    t = np.einsum("...k,...k->...", x - a, d) / np.where(dd > 0, dd, 1.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * d
    return np.linalg.norm(x - proj, axis=-1)


@dataclass(frozen=True, kw_only=True)
class ImmersedGeometry:
    """Base class; subclasses provide the curve and the level set."""

    center: tuple[float, float] = (0.0, 0.0)
    kind = "abstract"

    # -- required by subclasses -------------------------------------------
    def levelset(self, x) -> np.ndarray:
        raise NotImplementedError

    def boundary_point(self, t) -> np.ndarray:
        """Boundary point for parameter ``t`` in [0, 1), counterclockwise."""
        raise NotImplementedError

    def perimeter(self) -> float:
        raise NotImplementedError

    def point_at_arclength(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Points and unit outward normals at arc-length positions ``s``."""
        raise NotImplementedError

    def bounding_box(self) -> tuple[float, float, float, float]:
        raise NotImplementedError

    # -- shared behaviour ---------------------------------------------------
    def inside(self, x) -> np.ndarray | bool:
        x = np.asarray(x, dtype=float)
        out = self.levelset(_as_points(x)) < 0.0
        return bool(out[0]) if x.ndim == 1 else out

    def corners(self) -> np.ndarray:
        """Arc-length positions of boundary corners (empty for smooth curves)."""
        return np.empty(0)

    def area(self) -> float:
        pts, _ = self.point_at_arclength(np.linspace(0, self.perimeter(), 8192, endpoint=False))
        x, y = pts[:, 0], pts[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def segment_min_levelset(self, a: np.ndarray, b: np.ndarray, nsample: int = 17) -> np.ndarray:
        """Minimum of the level set along each segment ``[a_i, b_i]``.

        Dense sampling followed by a golden-section refinement around the best
        sample; exact overrides exist for conics.
        """
        a = _as_points(a)
        b = _as_points(b)
        t = np.linspace(0.0, 1.0, nsample)
        pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        phi = self.levelset(pts.reshape(-1, 2)).reshape(len(a), nsample)
        k = np.argmin(phi, axis=1)
        best = phi[np.arange(len(a)), k]
        lo = t[np.maximum(k - 1, 0)]
        hi = t[np.minimum(k + 1, nsample - 1)]
        g = 0.5 * (np.sqrt(5.0) - 1.0)
        for _ in range(40):
            m1 = hi - g * (hi - lo)
            m2 = lo + g * (hi - lo)
            f1 = self.levelset(a + m1[:, None] * (b - a))
            f2 = self.levelset(a + m2[:, None] * (b - a))
            left = f1 < f2
            hi = np.where(left, m2, hi)
            lo = np.where(left, lo, m1)
        tm = 0.5 * (lo + hi)
        return np.minimum(best, self.levelset(a + tm[:, None] * (b - a)))

    def overlaps_triangles(self, tris: np.ndarray) -> np.ndarray | None:
        """Exact overlap test, when the geometry has one (polygons)."""
        return None

    def sample_boundary(self, n: int) -> np.ndarray:
        s = np.arange(n) * (self.perimeter() / n)
        return self.point_at_arclength(s)[0]


class _SmoothCurve(ImmersedGeometry):
    """Closed curve given by an angle parameterization over [0, 2*pi)."""

    _npanel = 256
    _ngauss = 16

    def _xy(self, th: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _dxy(self, th: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _speed(self, th: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self._dxy(th), axis=-1)

    def boundary_point(self, t) -> np.ndarray:
        return self._xy(TWO_PI * np.asarray(t, dtype=float))

    def outward_normal_at_param(self, t) -> np.ndarray:
        d = self._dxy(TWO_PI * np.asarray(t, dtype=float))
        n = np.stack([d[..., 1], -d[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def _arc_table(self) -> tuple[np.ndarray, np.ndarray]:
        cached = self.__dict__.get("_table")
        if cached is not None:
            return cached
        edges = np.linspace(0.0, TWO_PI, self._npanel + 1)
        g, w = gauss_segment(self._ngauss)
        width = edges[1] - edges[0]
        th = edges[:-1, None] + width * g[None, :]
        lengths = width * (self._speed(th) * w).sum(axis=1)
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        object.__setattr__(self, "_table", (edges, cum))
        return edges, cum

    def _partial_length(self, th: np.ndarray, panel: np.ndarray) -> np.ndarray:
        edges, cum = self._arc_table()
        g, w = gauss_segment(self._ngauss)
        t0 = edges[panel]
        width = th - t0
        nodes = t0[:, None] + width[:, None] * g[None, :]
        return cum[panel] + width * (self._speed(nodes) * w).sum(axis=1)

    def perimeter(self) -> float:
        return float(self._arc_table()[1][-1])

    def arclength_to_angle(self, s) -> np.ndarray:
        """Invert the cumulative arc length by Newton iteration (tol 1e-13)."""
        edges, cum = self._arc_table()
        L = cum[-1]
        s = np.mod(np.asarray(s, dtype=float).ravel(), L)
        panel = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, self._npanel - 1)
        frac = (s - cum[panel]) / (cum[panel + 1] - cum[panel])
        th = edges[panel] + frac * (edges[panel + 1] - edges[panel])
        for _ in range(50):
            resid = self._partial_length(th, panel) - s
            th = th - resid / self._speed(th)
            if np.max(np.abs(resid)) < 1e-13 * max(L, 1.0):
                break
        return th

    def point_at_arclength(self, s):
        th = self.arclength_to_angle(s)
        d = self._dxy(th)
        n = np.stack([d[:, 1], -d[:, 0]], axis=-1)
        return self._xy(th), n / np.linalg.norm(n, axis=-1, keepdims=True)

    def bounding_box(self):
        pts = self._xy(np.linspace(0.0, TWO_PI, 4097))
        return (pts[:, 0].min(), pts[:, 0].max(), pts[:, 1].min(), pts[:, 1].max())


@dataclass(frozen=True)
class Circle(_SmoothCurve):
    radius: float = 1.0
    kind = "circle"

    def __post_init__(self):
        if not self.radius > 0:
            raise GeometryError(f"circle radius must be positive, got {self.radius}")

    def levelset(self, x):
        x = _as_points(x)
        return np.linalg.norm(x - np.asarray(self.center), axis=1) - self.radius

    def _xy(self, th):
        th = np.asarray(th, dtype=float)
        c = np.asarray(self.center)
        return c + self.radius * np.stack([np.cos(th), np.sin(th)], axis=-1)

    def _dxy(self, th):
        th = np.asarray(th, dtype=float)
        return self.radius * np.stack([-np.sin(th), np.cos(th)], axis=-1)

    def perimeter(self):
        return TWO_PI * self.radius

    def arclength_to_angle(self, s):
        return np.mod(np.asarray(s, dtype=float).ravel(), self.perimeter()) / self.radius

    def area(self):
        return np.pi * self.radius**2

    def segment_min_levelset(self, a, b, nsample=17):
        c = np.asarray(self.center)
        return point_segment_distance(c, _as_points(a), _as_points(b)) - self.radius

    def bounding_box(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy - r, cy + r)


@dataclass(frozen=True)
class Ellipse(_SmoothCurve):
    """Axis-aligned ellipse with semi-axes ``a`` (x) and ``b`` (y)."""

    a: float = 0.9
    b: float = 0.5
    kind = "ellipse"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise GeometryError(f"ellipse semi-axes must be positive, got {self.a}, {self.b}")

    def _scaled(self, x):
        x = _as_points(x) - np.asarray(self.center)
        return x / np.array([self.a, self.b])

    def levelset(self, x):
        # Scaled so the gradient has unit size along the minor axis.
        return (np.linalg.norm(self._scaled(x), axis=1) - 1.0) * min(self.a, self.b)

    def _xy(self, th):
        th = np.asarray(th, dtype=float)
        c = np.asarray(self.center)
        return c + np.stack([self.a * np.cos(th), self.b * np.sin(th)], axis=-1)

    def _dxy(self, th):
        th = np.asarray(th, dtype=float)
        return np.stack([-self.a * np.sin(th), self.b * np.cos(th)], axis=-1)

    def area(self):
        return np.pi * self.a * self.b

    def segment_min_levelset(self, a, b, nsample=17):
        d = point_segment_distance(np.zeros(2), self._scaled(a), self._scaled(b))
        return (d - 1.0) * min(self.a, self.b)

    def bounding_box(self):
        cx, cy = self.center
        return (cx - self.a, cx + self.a, cy - self.b, cy + self.b)


@dataclass(frozen=True)
class Star(_SmoothCurve):
    """Polar curve r(theta) = r0 + r1 cos(lobes * theta)."""

    r0: float = 0.65
    r1: float = 0.25
    lobes: int = 5
    kind = "star"

    def __post_init__(self):
        if not (self.r0 > self.r1 > 0):
            raise GeometryError(f"star needs r0 > r1 > 0, got r0={self.r0}, r1={self.r1}")
        if self.lobes < 1:
            raise GeometryError("star needs at least one lobe")

    def _radius(self, th):
        return self.r0 + self.r1 * np.cos(self.lobes * th)

    def levelset(self, x):
        x = _as_points(x) - np.asarray(self.center)
        rho = np.linalg.norm(x, axis=1)
        th = np.arctan2(x[:, 1], x[:, 0])
        return rho - self._radius(th)

    def _xy(self, th):
        th = np.asarray(th, dtype=float)
        r = self._radius(th)
        c = np.asarray(self.center)
        return c + r[..., None] * np.stack([np.cos(th), np.sin(th)], axis=-1)

    def _dxy(self, th):
        th = np.asarray(th, dtype=float)
        r = self._radius(th)
        dr = -self.r1 * self.lobes * np.sin(self.lobes * th)
        cs = np.stack([np.cos(th), np.sin(th)], axis=-1)
        perp = np.stack([-np.sin(th), np.cos(th)], axis=-1)
        return dr[..., None] * cs + r[..., None] * perp

    def area(self):
        return np.pi * (self.r0**2 + 0.5 * self.r1**2)


_LSHAPE_VERTICES = np.array(
    [[-1.0, -1.0], [0.0, -1.0], [0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [-1.0, 1.0]]
)


@dataclass(frozen=True)
class LShape(ImmersedGeometry):
    """(-1, 1)^2 minus the closed quadrant {x >= 0, y <= 0}; concave corner at the center."""

    kind = "lshape"

    @property
    def vertices(self) -> np.ndarray:
        return _LSHAPE_VERTICES + np.asarray(self.center)

    def _edges(self):
        v = self.vertices
        return v, np.roll(v, -1, axis=0)

    def _strictly_inside(self, x):
        x = x - np.asarray(self.center)
        in_square = (np.abs(x[:, 0]) < 1.0) & (np.abs(x[:, 1]) < 1.0)
        in_notch = (x[:, 0] >= 0.0) & (x[:, 1] <= 0.0)
        return in_square & ~in_notch

    def levelset(self, x):
        x = _as_points(x)
        a, b = self._edges()
        d = point_segment_distance(x[:, None, :], a[None], b[None]).min(axis=1)
        return np.where(self._strictly_inside(x), -d, d)

    def perimeter(self):
        a, b = self._edges()
        return float(np.linalg.norm(b - a, axis=1).sum())

    def _cumulative(self):
        a, b = self._edges()
        lengths = np.linalg.norm(b - a, axis=1)
        return a, b, lengths, np.concatenate([[0.0], np.cumsum(lengths)])

    def corners(self):
        return self._cumulative()[3][:-1]

    def point_at_arclength(self, s):
        a, b, lengths, cum = self._cumulative()
        s = np.mod(np.asarray(s, dtype=float).ravel(), cum[-1])
        k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(a) - 1)
        t = (s - cum[k]) / lengths[k]
        pts = a[k] + t[:, None] * (b[k] - a[k])
        d = (b[k] - a[k]) / lengths[k][:, None]
        return pts, np.stack([d[:, 1], -d[:, 0]], axis=-1)

    def boundary_point(self, t):
        t = np.asarray(t, dtype=float)
        pts, _ = self.point_at_arclength(t.ravel() * self.perimeter())
        return pts.reshape(t.shape + (2,))

    def area(self):
        return 3.0

    def bounding_box(self):
        cx, cy = self.center
        return (cx - 1.0, cx + 1.0, cy - 1.0, cy + 1.0)

    def overlaps_triangles(self, tris: np.ndarray) -> np.ndarray:
        """Exact interior-overlap test for triangles (N, 3, 2) against the polygon."""
        polys = shapely.polygons(np.asarray(tris, dtype=float))
        inter = shapely.area(shapely.intersection(polys, shapely.Polygon(self.vertices)))
        return inter > 1e-12 * shapely.area(polys)


GEOMETRY_KINDS = {"circle": Circle, "ellipse": Ellipse, "star": Star, "lshape": LShape}


def make_geometry(kind: str, **params) -> ImmersedGeometry:
    """Build a geometry from a config-style ``kind`` plus keyword parameters."""
    try:
        cls = GEOMETRY_KINDS[kind]
    except KeyError:
        raise GeometryError(f"unknown geometry kind {kind!r}") from None
    if "center" in params:
        params["center"] = tuple(float(v) for v in params["center"])
    return cls(**params)


def inside(geom: ImmersedGeometry, x) -> np.ndarray | bool:
    """True where ``x`` is strictly interior to the immersed domain."""
    return geom.inside(x)


@dataclass(frozen=True)
class BoundarySegmentation:
    """Uniform arc-length segmentation of the immersed boundary.

    Quadrature points lie on the true curve; ``weights`` are Gauss weights times
    the arc length of each segment, so they sum to the curve length.
    """

    n_segments: int
    endpoints: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    segment: np.ndarray
    h_gamma: float
    p: int = field(default=1)

    @property
    def chord_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.roll(self.endpoints, -1, axis=0) - self.endpoints, axis=1)


def gauss_points_for_degree(p: int) -> int:
    """Points per segment for a Gauss rule exact to degree ``p``."""
    return ceil((p + 1) / 2)


def segment_boundary(geom: ImmersedGeometry, n_segments: int, p: int) -> BoundarySegmentation:
    """Cut the boundary into ``n_segments`` pieces of equal arc length."""
    if n_segments < 3:
        raise GeometryError(f"need at least 3 boundary segments, got {n_segments}")
    if not 1 <= p <= 4:
        raise GeometryError(f"quadrature degree must be in [1, 4], got {p}")
    L = geom.perimeter()
    h = L / n_segments
    corners = geom.corners()
    if corners.size:
        pos = corners / h
        if np.max(np.abs(pos - np.round(pos))) > 1e-9:
            raise GeometryError(
                f"{n_segments} segments do not put every corner of the {geom.kind} "
                f"boundary on a segment endpoint"
            )
    starts = np.arange(n_segments) * h
    endpoints, _ = geom.point_at_arclength(starts)
    g, w = gauss_segment(gauss_points_for_degree(p))
    s = (starts[:, None] + h * g[None, :]).ravel()
    points, normals = geom.point_at_arclength(s)
    weights = np.tile(w * h, n_segments)
    segment = np.repeat(np.arange(n_segments), len(g))
    return BoundarySegmentation(
        n_segments=n_segments,
        endpoints=endpoints,
        points=points,
        weights=weights,
        normals=normals,
        segment=segment,
        h_gamma=h,
        p=p,
    )


def _sample_segments(segments: np.ndarray, n_samples: int) -> np.ndarray:
    a = segments[:, 0, :]
    b = segments[:, 1, :]
    lengths = np.linalg.norm(b - a, axis=1)
    spacing = lengths.sum() / n_samples
    counts = np.maximum(np.ceil(lengths / spacing).astype(int), 1)
    out = []
    for ai, bi, c in zip(a, b, counts):
        t = np.arange(c + 1) / c
        out.append(ai + t[:, None] * (bi - ai))
    return np.concatenate(out)


def _curve_samples(curve, n_samples: int) -> np.ndarray:
    if isinstance(curve, ImmersedGeometry):
        return curve.sample_boundary(n_samples)
    arr = np.asarray(curve, dtype=float)
    if arr.ndim == 3:
        return _sample_segments(arr, n_samples)
    # closed polyline
    segs = np.stack([arr, np.roll(arr, -1, axis=0)], axis=1)
    return _sample_segments(segs, n_samples)


def hausdorff_distance(geom, boundary, n_samples: int = 4096) -> float:
    """Symmetric Hausdorff distance between two closed curves.

    ``boundary`` may be another geometry, an ``(M, 2, 2)`` array of segments or an
    ``(N, 2)`` closed polyline.  Pairs of circles use the exact value
    ``|c1 - c2| + |r1 - r2|``; everything else is sampled with at least
    ``n_samples`` points per curve.
    """
    if isinstance(geom, Circle) and isinstance(boundary, Circle):
        dc = np.linalg.norm(np.subtract(geom.center, boundary.center))
        return float(dc + abs(geom.radius - boundary.radius))
    n_samples = max(int(n_samples), 2048)
    A = _curve_samples(geom, n_samples)
    B = _curve_samples(boundary, n_samples)
    dab = cKDTree(B).query(A)[0].max()
    dba = cKDTree(A).query(B)[0].max()
    return float(max(dab, dba))
