"""Uniform triangular background meshes and the enclosing active domain.

The background is a structured grid of congruent right triangles (each
rectangular cell split along its "/" diagonal).  The active mesh keeps every
triangle whose interior overlaps the immersed domain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from math import ceil

import numpy as np

from inverse_ibm.geometry import ImmersedGeometry

# |level set| below this counts as on the boundary (treated as inside).
CUT_TOL = 1e-12
# Barycentric slack for point location.
LOCATE_TOL = 1e-10

LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


class MeshError(ValueError):
    pass


class PointLocationError(MeshError):
    """A point does not lie in any active triangle."""


@dataclass(frozen=True)
class BackgroundMesh:
    """Structured ``nx`` by ``ny`` grid of cells, two triangles per cell.

    Cell ``(i, j)`` owns triangles ``2*(j*nx + i)`` (lower right) and
    ``2*(j*nx + i) + 1`` (upper left), both counterclockwise.
    """

    x0: float
    y0: float
    dx: float
    dy: float
    nx: int
    ny: int

    @cached_property
    def vertices(self) -> np.ndarray:
        xs = self.x0 + self.dx * np.arange(self.nx + 1)
        ys = self.y0 + self.dy * np.arange(self.ny + 1)
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def triangles(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        i, j = i.ravel(), j.ravel()
        v00 = j * (self.nx + 1) + i
        v10 = v00 + 1
        v01 = v00 + self.nx + 1
        v11 = v01 + 1
        tris = np.empty((2 * len(v00), 3), dtype=np.int64)
        tris[0::2] = np.column_stack([v00, v10, v11])
        tris[1::2] = np.column_stack([v00, v11, v01])
        return tris

    @property
    def n_triangles(self) -> int:
        return 2 * self.nx * self.ny

    @property
    def triangle_area(self) -> float:
        return 0.5 * self.dx * self.dy

    @property
    def h(self) -> float:
        """Nominal size: square root of the (common) triangle area."""
        return float(np.sqrt(self.triangle_area))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.x0, self.x0 + self.nx * self.dx, self.y0, self.y0 + self.ny * self.dy)

    def refine(self, times: int = 1) -> "BackgroundMesh":
        """Split every triangle into four similar ones ``times`` times.

        Midpoint subdivision of the grid's right triangles reproduces the finer
        grid with the same diagonal direction.
        """
        f = 2**times
        return BackgroundMesh(self.x0, self.y0, self.dx / f, self.dy / f, self.nx * f, self.ny * f)


def rectangle_mesh(bounds, nx: int, ny: int) -> BackgroundMesh:
    xmin, xmax, ymin, ymax = bounds
    if nx < 1 or ny < 1:
        raise MeshError("need at least one cell in each direction")
    return BackgroundMesh(xmin, ymin, (xmax - xmin) / nx, (ymax - ymin) / ny, nx, ny)


def build_background(bounds, H: float) -> BackgroundMesh:
    """Grid of square cells of side ``H*sqrt(2)`` covering ``bounds``.

    Triangle areas are exactly ``H**2``.  The grid is centred on the requested
    rectangle and overhangs it by less than one cell.
    """
    if not H > 0:
        raise MeshError(f"mesh size must be positive, got {H}")
    xmin, xmax, ymin, ymax = bounds
    s = H * np.sqrt(2.0)
    nx = max(1, ceil((xmax - xmin) / s - 1e-12))
    ny = max(1, ceil((ymax - ymin) / s - 1e-12))
    cx, cy = 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)
    return BackgroundMesh(cx - 0.5 * nx * s, cy - 0.5 * ny * s, s, s, nx, ny)


def background_for(geom: ImmersedGeometry, H: float, margin: float = 2.0) -> BackgroundMesh:
    """Background covering the geometry's bounding box inflated by ``margin*H``."""
    xmin, xmax, ymin, ymax = geom.bounding_box()
    pad = margin * H
    return build_background((xmin - pad, xmax + pad, ymin - pad, ymax + pad), H)


@dataclass(frozen=True)
class ActiveMesh:
    """Active triangles of a background mesh with their face structure.

    ``interior_faces`` rows are ``(k_plus, edge_plus, k_minus, edge_minus)`` with
    ``k_plus < k_minus``; ``boundary_edges`` rows are ``(k, edge)``.  Triangle
    indices refer to the active numbering, which preserves background order.
    """

    background: BackgroundMesh
    active: np.ndarray
    interior_faces: np.ndarray
    boundary_edges: np.ndarray

    @property
    def n_elements(self) -> int:
        return len(self.active)

    @property
    def h(self) -> float:
        return self.background.h

    @cached_property
    def triangles(self) -> np.ndarray:
        return self.background.triangles[self.active]

    @property
    def vertices(self) -> np.ndarray:
        return self.background.vertices

    @cached_property
    def coords(self) -> np.ndarray:
        """Vertex coordinates per active triangle, shape (ne, 3, 2)."""
        return self.vertices[self.triangles]

    @cached_property
    def active_index(self) -> np.ndarray:
        """Map background triangle -> active index (-1 if inactive)."""
        idx = np.full(self.background.n_triangles, -1, dtype=np.int64)
        idx[self.active] = np.arange(len(self.active))
        return idx

    @cached_property
    def jacobians(self) -> np.ndarray:
        c = self.coords
        return np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]], axis=-1)

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * np.abs(np.linalg.det(self.jacobians))

    def edge_geometry(self, k: np.ndarray, e: np.ndarray):
        """Start point, tangent vector, length and outward unit normal of local edges."""
        c = self.coords
        a = c[k, LOCAL_EDGES[e, 0]]
        b = c[k, LOCAL_EDGES[e, 1]]
        t = b - a
        length = np.linalg.norm(t, axis=1)
        n = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
        return a, t, length, n

    def boundary_segments(self) -> np.ndarray:
        """Boundary edges of the active mesh as an (nb, 2, 2) coordinate array."""
        k, e = self.boundary_edges[:, 0], self.boundary_edges[:, 1]
        a, t, _, _ = self.edge_geometry(k, e)
        return np.stack([a, a + t], axis=1)

    def boundary_length(self) -> float:
        k, e = self.boundary_edges[:, 0], self.boundary_edges[:, 1]
        return float(self.edge_geometry(k, e)[2].sum())

    def total_area(self) -> float:
        return float(self.areas.sum())

    def to_json(self, path=None) -> str:
        """Dump vertices, all background triangles and active flags as JSON."""
        flags = np.zeros(self.background.n_triangles, dtype=bool)
        flags[self.active] = True
        doc = {
            "h": self.h,
            "vertices": self.vertices.tolist(),
            "triangles": self.background.triangles.tolist(),
            "active": flags.tolist(),
        }
        text = json.dumps(doc)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _point_in_triangles(x: np.ndarray, tri: np.ndarray, tol: float) -> np.ndarray:
    """Barycentric containment of points ``x`` (..., 2) in triangles (..., 3, 2)."""
    a, b, c = tri[..., 0, :], tri[..., 1, :], tri[..., 2, :]
    v0, v1, v2 = b - a, c - a, x - a
    det = v0[..., 0] * v1[..., 1] - v0[..., 1] * v1[..., 0]
    l1 = (v2[..., 0] * v1[..., 1] - v2[..., 1] * v1[..., 0]) / det
    l2 = (v0[..., 0] * v2[..., 1] - v0[..., 1] * v2[..., 0]) / det
    l0 = 1.0 - l1 - l2
    return (l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol)


def _strictly_inside_triangles(x: np.ndarray, tri: np.ndarray) -> np.ndarray:
    return _point_in_triangles(x, tri, -1e-12)


def classify_active(mesh: BackgroundMesh, geom: ImmersedGeometry) -> np.ndarray:
    """Boolean mask of background triangles whose interior meets the domain.

    A triangle is active if a vertex is strictly inside, if one of its edges
    dips inside (edge/curve crossing even with every vertex outside), or if a
    boundary sample lies strictly inside it (domain smaller than a triangle).
    """
    verts = mesh.vertices
    phi = geom.levelset(verts)
    tri = mesh.triangles
    phit = phi[tri]
    active = (phit < -CUT_TOL).any(axis=1)

    # Only triangles within reach of the boundary need the edge test.
    diam = np.hypot(mesh.dx, mesh.dy)
    cand = np.flatnonzero(~active & (phit.min(axis=1) < 2.0 * diam))
    exact = geom.overlaps_triangles(verts[tri[cand]]) if cand.size else None
    if exact is not None:
        active[cand[exact]] = True
    elif cand.size:
        a = verts[tri[cand][:, LOCAL_EDGES[:, 0]]].reshape(-1, 2)
        b = verts[tri[cand][:, LOCAL_EDGES[:, 1]]].reshape(-1, 2)
        emin = geom.segment_min_levelset(a, b).reshape(-1, 3).min(axis=1)
        active[cand[emin < -CUT_TOL]] = True

    samples = geom.sample_boundary(4096)
    xmin, _, ymin, _ = mesh.bounds
    ci = np.floor((samples[:, 0] - xmin) / mesh.dx).astype(int)
    cj = np.floor((samples[:, 1] - ymin) / mesh.dy).astype(int)
    ok = (ci >= 0) & (ci < mesh.nx) & (cj >= 0) & (cj < mesh.ny)
    cells = cj[ok] * mesh.nx + ci[ok]
    for half in (0, 1):
        t = 2 * cells + half
        inside = _strictly_inside_triangles(samples[ok], verts[tri[t]])
        active[t[inside]] = True
    return active


def _faces(triangles: np.ndarray, n_vertices: int):
    ne = len(triangles)
    va = triangles[:, LOCAL_EDGES[:, 0]].ravel()
    vb = triangles[:, LOCAL_EDGES[:, 1]].ravel()
    key = np.minimum(va, vb) * n_vertices + np.maximum(va, vb)
    elem = np.repeat(np.arange(ne), 3)
    loc = np.tile(np.arange(3), ne)
    order = np.lexsort((elem, key))
    key, elem, loc = key[order], elem[order], loc[order]
    same = key[1:] == key[:-1]
    first = np.flatnonzero(same)
    interior = np.column_stack([elem[first], loc[first], elem[first + 1], loc[first + 1]])
    paired = np.zeros(len(key), dtype=bool)
    paired[first] = True
    paired[first + 1] = True
    boundary = np.column_stack([elem[~paired], loc[~paired]])
    interior = interior[np.lexsort((interior[:, 1], interior[:, 0]))]
    boundary = boundary[np.lexsort((boundary[:, 1], boundary[:, 0]))]
    return interior, boundary


def active_from_mask(mesh: BackgroundMesh, mask: np.ndarray) -> ActiveMesh:
    active = np.flatnonzero(mask)
    if active.size == 0:
        raise MeshError("no background triangle intersects the immersed domain")
    interior, boundary = _faces(mesh.triangles[active], len(mesh.vertices))
    return ActiveMesh(mesh, active, interior, boundary)


def extract_active(mesh: BackgroundMesh, geom: ImmersedGeometry) -> ActiveMesh:
    """Active mesh: every triangle interior to, or cut by, the immersed boundary."""
    return active_from_mask(mesh, classify_active(mesh, geom))


def locate_points(mesh: ActiveMesh, x, tol: float = LOCATE_TOL) -> np.ndarray:
    """Active triangle containing each point (lowest index on shared edges).

    Uses the background grid as a hash: a point only needs testing against the
    triangles of the cells around it.
    """
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    bg = mesh.background
    ci = np.floor((x[:, 0] - bg.x0) / bg.dx).astype(np.int64)
    cj = np.floor((x[:, 1] - bg.y0) / bg.dy).astype(np.int64)
    cand = []
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            i, j = ci + di, cj + dj
            valid = (i >= 0) & (i < bg.nx) & (j >= 0) & (j < bg.ny)
            cell = np.where(valid, j * bg.nx + i, 0)
            for half in (0, 1):
                t = 2 * cell + half
                k = np.where(valid, mesh.active_index[t], -1)
                cand.append(k)
    cand = np.stack(cand, axis=1)
    big = np.iinfo(np.int64).max
    tri = mesh.coords[np.maximum(cand, 0)]
    hit = (cand >= 0) & _point_in_triangles(x[:, None, :], tri, tol)
    best = np.where(hit, cand, big).min(axis=1)
    missing = best == big
    if missing.any():
        bad = x[np.flatnonzero(missing)[0]]
        raise PointLocationError(
            f"{int(missing.sum())} point(s) outside the active mesh, e.g. {bad.tolist()}; "
            "the immersed boundary is not covered by the enclosing domain"
        )
    return best


def locate_point(mesh: ActiveMesh, x) -> int:
    return int(locate_points(mesh, x)[0])


def reference_coordinates(mesh: ActiveMesh, k: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Invert the affine element maps: reference coordinates of ``x`` in ``k``."""
    J = mesh.jacobians[k]
    x0 = mesh.coords[k, 0]
    return np.linalg.solve(J, (x - x0)[..., None])[..., 0]
