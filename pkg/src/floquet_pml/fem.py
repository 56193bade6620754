"""P1 finite elements for the quasi-periodic cell problems.

Two formulations are provided:

* :func:`assemble_cell` / :func:`solve_cell` pose the Bloch-shifted
  Helmholtz problem on the cell below ``x2 = H`` with a Fourier boundary
  condition on the top edge, using either the exact DtN symbol or the
  PML-modified symbol.
* :func:`solve_stretched` discretizes the complex-stretched PML layer
  directly on a mesh extended to ``H + lambda`` with a Dirichlet lid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .kernels import PmlSpec
from .mesh import PeriodicCellMesh, trace_fourier, trace_fourier_matrix

RESIDUAL_TOL = 1e-10

# edge-midpoint rule: barycentric coordinates of the three points
_QUAD_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])


class CellSolveError(RuntimeError):
    """The sparse factorization failed or did not meet the residual contract."""


@dataclass(frozen=True)
class ExactDtN:
    """Boundary coefficients ``beta_j`` of the exact transparent condition."""

    def coefficients(self, k, alpha, j):
        return kernels.dtn_coeff(k, alpha, j)


@dataclass(frozen=True)
class Pml:
    """Boundary coefficients ``h(alpha, sigma, j)`` of the PML-modified condition."""

    sigma: complex

    def coefficients(self, k, alpha, j):
        return kernels.pml_coeff(k, alpha, j, self.sigma)


@dataclass(frozen=True)
class SourceTerm:
    """Compactly supported source ``f(x1, x2)``.

    ``support`` is ``("disk", cx, cy, r)`` or ``("box", x1_lo, x1_hi, x2_lo, x2_hi)``;
    evaluation is masked to it so the source vanishes outside.
    """

    evaluator: Callable
    support: tuple

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        kind = self.support[0]
        if kind == "disk":
            _, cx, cy, r = self.support
            inside = (x1 - cx) ** 2 + (x2 - cy) ** 2 < r * r
        elif kind == "box":
            _, a, b, c, d = self.support
            inside = (x1 >= a) & (x1 <= b) & (x2 >= c) & (x2 <= d)
        elif kind == "none":
            inside = np.zeros(np.broadcast(x1, x2).shape, dtype=bool)
        else:
            raise ValueError(f"unknown support kind {kind!r}")
        out = np.zeros(np.broadcast(x1, x2).shape, dtype=complex)
        if inside.any():
            b1, b2 = np.broadcast_arrays(x1, x2)
            out[inside] = self.evaluator(b1[inside], b2[inside])
        return out

    @classmethod
    def zero(cls) -> "SourceTerm":
        return cls(lambda x1, x2: np.zeros_like(x1, dtype=complex), ("none",))

    @classmethod
    def disk_trig(cls, center=(-0.4, 1.8), radius=0.4, kx=2 * np.pi, ky=2 * np.pi) -> "SourceTerm":
        """``cos(kx x1) sin(ky x2)`` on an open disk."""
        return cls(lambda x1, x2: np.cos(kx * x1) * np.sin(ky * x2) + 0j,
                   ("disk", float(center[0]), float(center[1]), float(radius)))

    def boundary_points(self, n: int = 720) -> np.ndarray:
        kind = self.support[0]
        if kind == "disk":
            _, cx, cy, r = self.support
            t = np.linspace(0, 2 * np.pi, n, endpoint=False)
            return np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])
        if kind == "box":
            _, a, b, c, d = self.support
            s = np.linspace(0, 1, n // 4)
            return np.vstack([
                np.column_stack([a + (b - a) * s, np.full_like(s, c)]),
                np.column_stack([a + (b - a) * s, np.full_like(s, d)]),
                np.column_stack([np.full_like(s, a), c + (d - c) * s]),
                np.column_stack([np.full_like(s, b), c + (d - c) * s]),
            ])
        return np.empty((0, 2))

    def check_inside(self, zeta: Callable, top: float) -> None:
        """Raise if the support leaves the base cell or touches the surface or ``top``."""
        pts = self.boundary_points()
        if pts.size == 0:
            return
        x1, x2 = pts[:, 0], pts[:, 1]
        if np.any(x1 < -np.pi - 1e-12) or np.any(x1 > np.pi + 1e-12):
            raise ValueError("source support leaves the base cell")
        if np.any(x2 <= zeta(x1)) or np.any(x2 >= top):
            raise ValueError("source support must lie strictly between the surface and the top line")


@dataclass
class CellSystem:
    """Assembled sparse system on the free unknowns of one cell problem."""

    mesh: PeriodicCellMesh
    alpha: float
    k: float
    matrix: sp.csc_matrix
    rhs: np.ndarray
    dof: np.ndarray
    J: int
    bc: object = None


@dataclass
class CellSolution:
    """Nodal P1 field ``w(alpha, .)`` and the Fourier data of its top trace."""

    alpha: float
    mesh: PeriodicCellMesh
    values: np.ndarray
    trace_coefficients: np.ndarray
    J: int
    residual: float = 0.0
    info: dict = field(default_factory=dict)

    def coefficient(self, j: int) -> complex:
        return complex(self.trace_coefficients[j + self.J])

    def evaluate(self, points) -> np.ndarray:
        return self.mesh.interpolation_matrix(points) @ self.values


def _geometry(mesh: PeriodicCellMesh):
    p = mesh.vertices[mesh.triangles]
    x0, x1, x2 = p[:, 0], p[:, 1], p[:, 2]
    det = (x1[:, 0] - x0[:, 0]) * (x2[:, 1] - x0[:, 1]) - (x1[:, 1] - x0[:, 1]) * (x2[:, 0] - x0[:, 0])
    area = 0.5 * np.abs(det)
    # gradients of the barycentric coordinates
    gx = np.column_stack([x1[:, 1] - x2[:, 1], x2[:, 1] - x0[:, 1], x0[:, 1] - x1[:, 1]]) / det[:, None]
    gy = np.column_stack([x2[:, 0] - x1[:, 0], x0[:, 0] - x2[:, 0], x1[:, 0] - x0[:, 0]]) / det[:, None]
    qpts = np.einsum("qa,tad->tqd", _QUAD_BARY, p)
    return area, gx, gy, qpts


def _local_forms(mesh, alpha, k, f, stretch=None):
    """Element matrices (nt, 3, 3) and load vectors (nt, 3).

    ``stretch`` maps quadrature-point heights to ``s``; ``None`` means ``s = 1``.
    """
    area, gx, gy, q = _geometry(mesh)
    w = area[:, None] / 3.0
    if stretch is None:
        s = np.ones(q.shape[:2], dtype=complex)
    else:
        s = np.asarray(stretch(q[..., 1]), dtype=complex)
    int_s = (w * s).sum(axis=1)
    int_inv_s = (w / s).sum(axis=1)
    # int s * lambda_a
    int_s_phi = np.einsum("tq,tq,qa->ta", w, s, _QUAD_BARY)
    int_s_phiphi = np.einsum("tq,tq,qa,qb->tab", w, s, _QUAD_BARY, _QUAD_BARY)

    stiff = (int_s[:, None, None] * gx[:, :, None] * gx[:, None, :]
             + int_inv_s[:, None, None] * gy[:, :, None] * gy[:, None, :])
    # row a = test function, column b = trial function
    drift = -2j * alpha * int_s_phi[:, :, None] * gx[:, None, :]
    mass = -(k * k - alpha * alpha) * int_s_phiphi
    local = stiff + drift + mass

    g = np.exp(-1j * alpha * q[..., 0]) * f(q[..., 0], q[..., 1])
    load = -np.einsum("tq,tq,tq,qa->ta", w, s, g, _QUAD_BARY)
    return local, load


def _scatter(mesh, dof, ndof, local, load):
    tri_dof = dof[mesh.triangles]
    rows = np.repeat(tri_dof, 3, axis=1).ravel()
    cols = np.tile(tri_dof, (1, 3)).ravel()
    vals = local.ravel()
    keep = (rows >= 0) & (cols >= 0)
    A = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(ndof, ndof))
    b = np.zeros(ndof, dtype=complex)
    lr = tri_dof.ravel()
    lv = load.ravel()
    m = lr >= 0
    np.add.at(b, lr[m], lv[m])
    return A, b


def domain_matrix(mesh: PeriodicCellMesh, alpha: float, k: float) -> sp.csc_matrix:
    """Domain part of the cell form (no boundary term), on the free unknowns."""
    dof, ndof = mesh.numbering((0,))
    local, load = _local_forms(mesh, alpha, k, SourceTerm.zero())
    A, _ = _scatter(mesh, dof, ndof, local, load)
    return A.tocsc()


def drift_block(mesh: PeriodicCellMesh) -> sp.csc_matrix:
    """Real first-order block ``C[a, b] = int d(phi_b)/dx1 phi_a``; skew-symmetric."""
    dof, ndof = mesh.numbering((0,))
    area, gx, _, _ = _geometry(mesh)
    local = (area[:, None] / 3.0)[:, :, None] * gx[:, None, :] * np.ones((1, 3, 1))
    A, _ = _scatter(mesh, dof, ndof, local.astype(complex), np.zeros((len(area), 3)))
    return A.real.tocsc()


def default_truncation(k: float) -> int:
    return math.ceil(k) + 10


def assemble_cell(mesh: PeriodicCellMesh, alpha: float, k: float, bc, J: int | None,
                  f: SourceTerm) -> CellSystem:
    """Assemble the quasi-periodic cell problem with a Fourier boundary term.

    The sesquilinear form is
    ``int [grad w . grad phi* - 2i alpha w_x1 phi* - (k^2 - alpha^2) w phi*]
    - 2 pi i sum_{|j| <= J} c_j w_hat(j) phi_hat(j)*`` with ``c_j`` from ``bc``;
    the load is ``-int exp(-i alpha x1) f phi*``.  Surface vertices are
    eliminated (homogeneous Dirichlet) and left/right columns share unknowns.
    """
    if J is None:
        J = default_truncation(k)
    if J < math.ceil(k) + 1:
        raise ValueError(f"truncation J={J} too small for k={k}; need J >= {math.ceil(k) + 1}")
    if mesh.top_row != mesh.n_rows - 1:
        raise ValueError("assemble_cell needs a mesh ending at the boundary line")
    f.check_inside(lambda x: np.interp(x, mesh.x1, mesh.heights[0]), mesh.top)

    dof, ndof = mesh.numbering((0,))
    local, load = _local_forms(mesh, alpha, k, f)
    A, b = _scatter(mesh, dof, ndof, local, load)

    j = np.arange(-J, J + 1)
    c = np.asarray(bc.coefficients(k, alpha, j), dtype=complex)
    T = trace_fourier_matrix(mesh.n1, J)
    block = -2j * np.pi * (T.conj().T * c[None, :]) @ T
    top_dofs = dof[mesh.top_edge[:-1]]
    rr, cc = np.meshgrid(top_dofs, top_dofs, indexing="ij")
    B = sp.coo_matrix((block.ravel(), (rr.ravel(), cc.ravel())), shape=(ndof, ndof))
    return CellSystem(mesh, float(alpha), float(k), (A + B).tocsc(), b, dof, J, bc)


def _factor_solve(matrix, rhs):
    if not np.any(rhs):
        return np.zeros_like(rhs), 0.0, {}
    try:
        lu = spla.splu(matrix)
    except RuntimeError as exc:
        raise CellSolveError(f"sparse factorization failed: {exc}") from exc
    x = lu.solve(rhs)
    piv = np.abs(lu.U.diagonal())
    info = {"pivot_min": float(piv.min()), "pivot_max": float(piv.max())}
    res = float(np.linalg.norm(matrix @ x - rhs) / np.linalg.norm(rhs))
    if not np.isfinite(res) or res > RESIDUAL_TOL:
        # one step of iterative refinement before giving up
        x = x + lu.solve(rhs - matrix @ x)
        res = float(np.linalg.norm(matrix @ x - rhs) / np.linalg.norm(rhs))
    if not np.isfinite(res) or res > RESIDUAL_TOL:
        raise CellSolveError(
            f"relative residual {res:.3e} exceeds {RESIDUAL_TOL:g} "
            f"(pivots |U_ii| in [{info['pivot_min']:.3e}, {info['pivot_max']:.3e}])")
    return x, res, info


def _expand(dof, x):
    full = np.zeros(dof.size, dtype=complex)
    m = dof >= 0
    full[m] = x[dof[m]]
    return full


def solve_cell(system: CellSystem) -> CellSolution:
    """Sparse LU solve of an assembled cell system."""
    x, res, info = _factor_solve(system.matrix, system.rhs)
    values = _expand(system.dof, x)
    mesh = system.mesh
    coeffs = trace_fourier(mesh, values[mesh.top_edge], system.J)
    return CellSolution(system.alpha, mesh, values, coeffs, system.J, res, info)


def solve_stretched(mesh: PeriodicCellMesh, alpha: float, k: float, pml: PmlSpec,
                    f: SourceTerm, J: int | None = None) -> CellSolution:
    """Solve the stretched-coordinate PML problem on a mesh reaching ``H + lambda``.

    Weak form (multiplied through by ``s``):
    ``int [s w_x1 phi_x1* + w_x2 phi_x2* / s - 2i alpha s w_x1 phi* - (k^2 - alpha^2) s w phi*]
    = -int s exp(-i alpha x1) f phi*`` with Dirichlet zero on the surface and the lid.
    The returned trace coefficients are those on ``x2 = H``.
    """
    if abs(mesh.top - pml.H) > 1e-12 or abs(mesh.heights[-1, 0] - pml.top) > 1e-9:
        raise ValueError("mesh must have its interface at H and its lid at H + lambda")
    if J is None:
        J = default_truncation(k)
    f.check_inside(lambda x: np.interp(x, mesh.x1, mesh.heights[0]), pml.H)
    dof, ndof = mesh.numbering((0, mesh.n_rows - 1))
    lid = pml.top
    local, load = _local_forms(mesh, alpha, k, f,
                               stretch=lambda x2: kernels.stretch(np.minimum(x2, lid), pml))
    A, b = _scatter(mesh, dof, ndof, local, load)
    x, res, info = _factor_solve(A.tocsc(), b)
    values = _expand(dof, x)
    coeffs = trace_fourier(mesh, values[mesh.top_edge], J)
    return CellSolution(float(alpha), mesh, values, coeffs, J, res, info)
