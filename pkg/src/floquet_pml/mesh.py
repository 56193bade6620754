"""Layered triangulation of one periodicity cell above a periodic surface.

The cell ``[-pi, pi] x [zeta(x1), top]`` is covered by a structured grid
mapped by ``(x1, (1 - s) zeta(x1) + s top)``.  An optional flat extension
stacks uniform rows on top (used for the stretched-coordinate PML layer),
so that the line ``x2 = top`` stays a mesh line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

TWO_PI = 2 * np.pi


@dataclass(frozen=True)
class SurfaceProfile:
    """2 pi-periodic surface ``x2 = zeta(x1)`` with a line ``x2 = H`` above it."""

    zeta: Callable
    H: float
    n_samples: int = 4096
    zeta_min: float = field(init=False)
    zeta_max: float = field(init=False)

    def __post_init__(self):
        x = np.linspace(-np.pi, np.pi, self.n_samples + 1)
        z = np.asarray(self.zeta(x), dtype=float)
        if abs(z[0] - z[-1]) > 1e-12:
            raise ValueError("surface profile is not 2 pi-periodic")
        object.__setattr__(self, "zeta_min", float(z.min()))
        object.__setattr__(self, "zeta_max", float(z.max()))
        if not self.H > self.zeta_max:
            raise ValueError(f"H={self.H} must lie above the surface (max {self.zeta_max:.6g})")

    @classmethod
    def trig(cls, mean: float, sin: Sequence[float] = (), cos: Sequence[float] = (),
             H: float = 1.0) -> "SurfaceProfile":
        """``zeta = mean + sum_n sin[n-1] sin(n x1) + cos[n-1] cos(n x1)``."""
        a = np.asarray(sin, dtype=float)
        b = np.asarray(cos, dtype=float)

        def zeta(x1):
            x1 = np.asarray(x1, dtype=float)
            out = np.full_like(x1, mean)
            for n, c in enumerate(a, start=1):
                out = out + c * np.sin(n * x1)
            for n, c in enumerate(b, start=1):
                out = out + c * np.cos(n * x1)
            return out

        return cls(zeta, H)

    @classmethod
    def flat(cls, height: float = 0.0, H: float = 1.0) -> "SurfaceProfile":
        return cls.trig(height, H=H)


@dataclass(frozen=True, eq=False)
class PeriodicCellMesh:
    """Structured, periodic P1 triangulation of a periodicity cell.

    Vertices are stored row by row, ``v = row * (n1 + 1) + col``; the last
    column duplicates the first one shifted by ``2 pi``.  Row 0 lies on the
    surface, row ``top_row`` on ``x2 = top`` and the last row on the upper
    edge of the mesh (``top + extension``).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    n1: int
    n_rows: int
    top_row: int
    h: float
    top: float
    heights: np.ndarray  # (n_rows, n1 + 1) row heights per column

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def dx(self) -> float:
        return TWO_PI / self.n1

    @property
    def x1(self) -> np.ndarray:
        return self.vertices[: self.n1 + 1, 0]

    def row(self, r: int) -> np.ndarray:
        if r < 0:
            r += self.n_rows
        return r * (self.n1 + 1) + np.arange(self.n1 + 1)

    @property
    def bottom(self) -> np.ndarray:
        return self.row(0)

    @property
    def top_edge(self) -> np.ndarray:
        """Vertices on ``x2 = top``, ordered by ``x1`` and including both ends."""
        return self.row(self.top_row)

    @property
    def upper_edge(self) -> np.ndarray:
        return self.row(-1)

    @property
    def periodic_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """(left, right) vertex indices identified by the periodicity."""
        rows = np.arange(self.n_rows) * (self.n1 + 1)
        return rows, rows + self.n1

    def numbering(self, dirichlet_rows: Sequence[int] = (0,)) -> tuple[np.ndarray, int]:
        """Map vertices to unknowns: right column shares the left unknown and
        vertices on ``dirichlet_rows`` get ``-1``."""
        n1p = self.n1 + 1
        cols = np.arange(n1p)
        col = np.where(cols == self.n1, 0, cols)
        dirichlet = np.zeros(self.n_rows, dtype=bool)
        for r in dirichlet_rows:
            dirichlet[r] = True
        free_rows = np.cumsum(~dirichlet) - 1
        dof = free_rows[:, None] * self.n1 + col[None, :]
        dof[dirichlet, :] = -1
        return dof.ravel(), int((~dirichlet).sum() * self.n1)

    def submesh_size(self) -> int:
        """Number of vertices at or below ``x2 = top``."""
        return (self.top_row + 1) * (self.n1 + 1)

    def triangle_angles(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        angles = np.empty(self.triangles.shape)
        for a in range(3):
            u = p[:, (a + 1) % 3] - p[:, a]
            v = p[:, (a + 2) % 3] - p[:, a]
            cosang = np.einsum("ij,ij->i", u, v) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            angles[:, a] = np.degrees(np.arccos(np.clip(cosang, -1, 1)))
        return angles

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def mass_matrix(self, below_top: bool = False) -> sp.csr_matrix:
        """Consistent P1 mass matrix on all vertices (or only the part of the
        mesh at or below ``x2 = top``)."""
        tris = self.triangles
        if below_top:
            n_quads = self.top_row * self.n1
            tris = tris[: 2 * n_quads]
        area = np.abs(_areas(self.vertices, tris))
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        vals = (area[:, None, None] * local[None]).ravel()
        n = self.submesh_size() if below_top else self.n_vertices
        return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()

    def l2_norm(self, values, below_top: bool = False) -> float:
        v = np.asarray(values)
        if below_top:
            v = v[: self.submesh_size()]
        m = self.mass_matrix(below_top)
        return float(np.sqrt(abs(np.vdot(v, m @ v))))

    def locate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Containing triangle and barycentric coordinates of base-cell points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x1, x2 = pts[:, 0], pts[:, 1]
        eps = 1e-10
        if np.any(x1 < -np.pi - eps) or np.any(x1 > np.pi + eps):
            raise ValueError("points must lie in the base cell [-pi, pi]")
        dx = self.dx
        col = np.clip(np.floor((x1 + np.pi) / dx).astype(int), 0, self.n1 - 1)
        tau = (x1 - self.x1[col]) / dx
        lines = (1 - tau)[None, :] * self.heights[:, col] + tau[None, :] * self.heights[:, col + 1]
        if np.any(x2 < lines[0] - eps) or np.any(x2 > lines[-1] + eps):
            raise ValueError("points outside the meshed region")
        row = np.clip((lines <= x2[None, :]).sum(axis=0) - 1, 0, self.n_rows - 2)
        quad = row * self.n1 + col
        best_tri = np.empty(pts.shape[0], dtype=int)
        best_bary = np.empty((pts.shape[0], 3))
        best_min = np.full(pts.shape[0], -np.inf)
        for off in (0, 1):
            t = 2 * quad + off
            bary = _barycentric(self.vertices[self.triangles[t]], pts)
            m = bary.min(axis=1)
            better = m > best_min
            best_tri[better] = t[better]
            best_bary[better] = bary[better]
            best_min[better] = m[better]
        return best_tri, best_bary

    def interpolation_matrix(self, points) -> sp.csr_matrix:
        """Sparse matrix evaluating a nodal P1 field at ``points``."""
        tri, bary = self.locate(points)
        n = tri.size
        rows = np.repeat(np.arange(n), 3)
        cols = self.triangles[tri].ravel()
        return sp.csr_matrix((bary.ravel(), (rows, cols)), shape=(n, self.n_vertices))

    def write(self, path) -> None:
        """Plain-text dump: ``v index x1 x2`` then ``t index a b c`` lines."""
        with open(path, "w", encoding="utf-8") as fh:
            for i, (a, b) in enumerate(self.vertices):
                fh.write(f"v {i} {a:.17g} {b:.17g}\n")
            for i, (a, b, c) in enumerate(self.triangles):
                fh.write(f"t {i} {a} {b} {c}\n")


def _areas(vertices, tris):
    p = vertices[tris]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _barycentric(tri_pts, pts):
    a, b, c = tri_pts[:, 0], tri_pts[:, 1], tri_pts[:, 2]
    v0 = b - a
    v1 = c - a
    v2 = pts - a
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / det
    return np.column_stack([1 - l1 - l2, l1, l2])


def build_cell_mesh(surface: SurfaceProfile, top: float, h: float,
                    extension: float = 0.0) -> PeriodicCellMesh:
    """Mapped structured triangulation of the cell between the surface and ``top``.

    Uses ``n1 = ceil(2 pi / h)`` columns and ``n2 = ceil((top - zeta_min) / h)``
    layers; each quad is split along its shorter diagonal.  A positive
    ``extension`` adds ``ceil(extension / h)`` flat rows up to ``top + extension``.
    """
    if not h > 0:
        raise ValueError("mesh size must be positive")
    if not top > surface.zeta_max:
        raise ValueError("top must lie above the surface")
    if extension < 0:
        raise ValueError("extension must be nonnegative")
    n1 = math.ceil(TWO_PI / h)
    n2 = math.ceil((top - surface.zeta_min) / h)
    if n2 < 2:
        raise ValueError(f"only {n2} layer(s) between surface and top; refine h")
    n3 = math.ceil(extension / h) if extension > 0 else 0

    x1 = -np.pi + TWO_PI * np.arange(n1 + 1) / n1
    x1[-1] = np.pi
    z = np.asarray(surface.zeta(x1), dtype=float)
    z[-1] = z[0]
    s = np.arange(n2 + 1) / n2
    heights = (1 - s)[:, None] * z[None, :] + s[:, None] * top
    heights[-1] = top
    if n3:
        ext = top + extension * np.arange(1, n3 + 1) / n3
        heights = np.vstack([heights, np.repeat(ext[:, None], n1 + 1, axis=1)])
    n_rows = heights.shape[0]

    X1 = np.broadcast_to(x1, heights.shape)
    vertices = np.column_stack([X1.ravel(), heights.ravel()])

    n1p = n1 + 1
    r, c = np.meshgrid(np.arange(n_rows - 1), np.arange(n1), indexing="ij")
    v00 = (r * n1p + c).ravel()
    v10 = v00 + 1
    v01 = v00 + n1p
    v11 = v01 + 1
    d_main = np.linalg.norm(vertices[v11] - vertices[v00], axis=1)
    d_anti = np.linalg.norm(vertices[v01] - vertices[v10], axis=1)
    main = d_main <= d_anti
    t0 = np.where(main[:, None], np.column_stack([v00, v10, v11]), np.column_stack([v00, v10, v01]))
    t1 = np.where(main[:, None], np.column_stack([v00, v11, v01]), np.column_stack([v10, v11, v01]))
    triangles = np.empty((2 * v00.size, 3), dtype=int)
    triangles[0::2] = t0
    triangles[1::2] = t1

    return PeriodicCellMesh(vertices, triangles, n1, n_rows, n2, float(h), float(top), heights)


def trace_fourier_matrix(n1: int, J: int) -> np.ndarray:
    """Matrix ``T`` with ``T[j + J, i] = (1 / 2 pi) int hat_i(x) e^{-i j x} dx``
    for the periodic P1 hat functions on ``n1`` uniform cells."""
    dx = TWO_PI / n1
    j = np.arange(-J, J + 1)
    x = -np.pi + dx * np.arange(n1)
    half = j * dx / 2
    sinc2 = np.ones_like(half)
    nz = half != 0
    sinc2[nz] = (np.sin(half[nz]) / half[nz]) ** 2
    return (dx / TWO_PI) * sinc2[:, None] * np.exp(-1j * np.outer(j, x))


def trace_fourier(mesh: PeriodicCellMesh, values, J: int) -> np.ndarray:
    """Fourier coefficients ``w_hat(j)``, ``|j| <= J``, of the piecewise linear
    trace on ``x2 = top``, integrated exactly element by element.

    ``values`` are the nodal values along the top edge, with or without the
    duplicated right end point.
    """
    v = np.asarray(values, dtype=complex)
    if v.size == mesh.n1 + 1:
        v = v[:-1]
    if v.size != mesh.n1:
        raise ValueError(f"expected {mesh.n1} trace values, got {v.size}")
    return trace_fourier_matrix(mesh.n1, J) @ v
