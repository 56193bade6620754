"""Gauss-Legendre rules, the exceptional-case Floquet grid and the
Floquet-Bloch transform.

The Floquet integral over one period of the Floquet parameter is split at
the cutoff point ``c`` (0 for integer ``k``, 1/2 for odd ``2k``) and each
half is rewritten with ``alpha = c +- t**2`` before applying an ``N``-point
Gauss-Legendre rule in ``t``.  This removes the square-root singularities
of the cell solutions at the cutoff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .kernels import NonExceptionalWavenumber, Wavenumber

MAX_ORDER = 512


class QuadratureError(RuntimeError):
    """Newton iteration failed inside a certified node bracket."""


def legendre_eval(n: int, x):
    """Return ``(P_n(x), P_n'(x))`` via the three-term recurrence."""
    x = np.asarray(x, dtype=float)
    p0 = np.ones_like(x)
    if n == 0:
        return p0, np.zeros_like(x)
    p1 = x.copy()
    for m in range(1, n):
        p0, p1 = p1, ((2 * m + 1) * x * p1 - m * p0) / (m + 1)
    # p1 = P_n, p0 = P_{n-1}
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


def bruns_brackets(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Angular brackets ``((2j-1)pi/(2n+1), 2j pi/(2n+1))``, ``j = 1..n``.

    Each bracket isolates exactly one zero of ``P_n(cos theta)``.
    """
    j = np.arange(1, n + 1)
    return (2 * j - 1) * np.pi / (2 * n + 1), 2 * j * np.pi / (2 * n + 1)


@dataclass(frozen=True)
class GaussRule:
    """N-point Gauss-Legendre rule on ``[-1, 1]`` with increasing nodes."""

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def angles(self) -> np.ndarray:
        """Angles ``theta_j`` in increasing order, ``d_j = cos(theta_{N+1-j})``."""
        return np.arccos(self.nodes[::-1])

    def integrate(self, func: Callable) -> float:
        return float(np.dot(self.weights, func(self.nodes)))


def legendre_rule(n: int, *, tol: float = 4e-16, max_iter: int = 100) -> GaussRule:
    """Gauss-Legendre nodes and weights for ``1 <= n <= 512``.

    Every node is found by Newton's method on ``P_n`` confined to its Bruns
    bracket; a step leaving the bracket is replaced by bisection.  Because
    the brackets isolate the roots, failure to converge can only mean a bug
    and raises :class:`QuadratureError`.
    """
    if int(n) != n or not 1 <= n <= MAX_ORDER:
        raise ValueError(f"order must be an integer in [1, {MAX_ORDER}], got {n!r}")
    n = int(n)
    th_lo, th_hi = bruns_brackets(n)
    # cos is decreasing, so the bracket in x is (cos th_hi, cos th_lo)
    lo = np.cos(th_hi)
    hi = np.cos(th_lo)
    p_lo, _ = legendre_eval(n, lo)
    x = np.cos((4 * np.arange(1, n + 1) - 1) * np.pi / (4 * n + 2))
    x = np.clip(x, lo, hi)

    converged = np.zeros(n, dtype=bool)
    for _ in range(max_iter):
        p, dp = legendre_eval(n, x)
        # shrink the bracket around the sign change
        same = np.sign(p) == np.sign(p_lo)
        lo = np.where(same & ~converged, x, lo)
        hi = np.where(~same & ~converged, x, hi)
        step = p / dp
        x_new = x - step
        outside = (x_new <= lo) | (x_new >= hi) | ~np.isfinite(x_new)
        x_new = np.where(outside, 0.5 * (lo + hi), x_new)
        delta = np.abs(x_new - x)
        x = np.where(converged, x, x_new)
        converged |= delta <= tol * np.maximum(1.0, np.abs(x))
        if converged.all():
            break
    else:
        bad = np.flatnonzero(~converged) + 1
        raise QuadratureError(f"Newton did not converge for nodes {bad.tolist()} of P_{n}")

    _, dp = legendre_eval(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    nodes, weights = x[order], w[order]
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return GaussRule(n, nodes, weights)


@dataclass(frozen=True)
class FloquetGrid:
    """The ``2N`` Floquet samples of the substituted Gauss rule.

    Samples ``0..N-1`` lie above the center (``side = +1``), samples
    ``N..2N-1`` below it; within each half they follow the Gauss nodes in
    increasing order.
    """

    center: float
    order: int
    alpha: np.ndarray
    weight: np.ndarray
    side: np.ndarray

    def __len__(self) -> int:
        return self.alpha.size

    def separation(self) -> float:
        """Smallest distance from any sample to an integer."""
        return float(np.min(np.abs(self.alpha - np.round(self.alpha))))

    def distance_to_cutoff(self) -> np.ndarray:
        """Distance of each sample to the nearest cutoff point ``c + Z``."""
        d = self.alpha - self.center
        return np.abs(d - np.round(d))


def floquet_grid(k, n: int) -> FloquetGrid:
    """Floquet grid for an exceptional wavenumber (``2k`` integer).

    ``alpha = c +- ((d_j + 1) / (2 sqrt 2))**2`` with combined weight
    ``s_j (d_j + 1) / 4``; the weights of all ``2N`` samples add up to 1.
    """
    wn = k if isinstance(k, Wavenumber) else Wavenumber(float(k))
    if not wn.exceptional:
        raise NonExceptionalWavenumber(
            f"k={wn.k}: only wavenumbers with 2k integer are supported"
        )
    c = wn.critical_center
    rule = legendre_rule(n)
    t = (rule.nodes + 1.0) / (2.0 * math.sqrt(2.0))
    t2 = t * t
    w = rule.weights * (rule.nodes + 1.0) / 4.0
    alpha = np.concatenate([c + t2, c - t2])
    weight = np.concatenate([w, w])
    side = np.concatenate([np.ones(n, dtype=int), -np.ones(n, dtype=int)])
    for a in (alpha, weight, side):
        a.setflags(write=False)
    return FloquetGrid(c, n, alpha, weight, side)


def fold(x1):
    """Split ``x1`` into a base-cell coordinate in ``[-pi, pi)`` and a cell shift."""
    x1 = np.asarray(x1, dtype=float)
    shift = np.floor((x1 + np.pi) / (2 * np.pi)).astype(int)
    return x1 - 2 * np.pi * shift, shift


@dataclass(frozen=True)
class CompactField:
    """A field on the periodic strip sampled cell by cell.

    ``values[c, i, l]`` is the value at ``(x1[i] + 2 pi (first_cell + c), x2[l])``
    with the local grid ``x1`` inside ``[-pi, pi]``.  Cells outside
    ``first_cell..last_cell`` carry zero.
    """

    first_cell: int
    x1: np.ndarray
    x2: np.ndarray
    values: np.ndarray

    @property
    def last_cell(self) -> int:
        return self.first_cell + self.values.shape[0] - 1

    @classmethod
    def from_function(cls, func: Callable, cells: Sequence[int], x1, x2) -> "CompactField":
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        cells = list(cells)
        if cells != list(range(cells[0], cells[0] + len(cells))):
            raise ValueError("cells must be a contiguous range")
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        vals = np.stack([np.asarray(func(X1 + 2 * np.pi * c, X2), dtype=complex) for c in cells])
        return cls(cells[0], x1, x2, vals)

    def __call__(self, cell: int) -> np.ndarray:
        """Samples on cell ``cell`` (zeros outside the support)."""
        c = cell - self.first_cell
        if 0 <= c < self.values.shape[0]:
            return self.values[c]
        return np.zeros(self.values.shape[1:], dtype=complex)


def bloch_transform(phi: CompactField, alpha: float) -> np.ndarray:
    """Floquet-Bloch transform ``sum_j phi(x1 + 2 pi j, x2) exp(-i alpha (x1 + 2 pi j))``
    on the local grid of ``phi``; the result is 2 pi-periodic in ``x1``."""
    out = np.zeros(phi.values.shape[1:], dtype=complex)
    for c in range(phi.values.shape[0]):
        shift = 2 * np.pi * (phi.first_cell + c)
        phase = np.exp(-1j * alpha * (phi.x1 + shift))
        out += phi.values[c] * phase[:, None]
    return out


def inverse_bloch(alphas, weights, transforms, x1, cell: int = 0) -> np.ndarray:
    """Quadrature form of the inverse transform on cell ``cell``.

    ``transforms[q]`` holds the transform at ``alphas[q]`` on a local grid
    whose first axis is ``x1``.
    """
    xg = np.asarray(x1, dtype=float) + 2 * np.pi * cell
    out = np.zeros(np.shape(transforms[0]), dtype=complex)
    for a, w, tr in zip(alphas, weights, transforms):
        phase = np.exp(1j * a * xg)
        out += w * phase.reshape((-1,) + (1,) * (np.ndim(tr) - 1)) * tr
    return out


def synthesize(grid: FloquetGrid, cell_solutions, points) -> np.ndarray:
    """Discrete inverse transform ``u_N(x) = sum_j weight_j e^{i alpha_j x1} w(alpha_j, x)``.

    ``points`` is an array of ``(x1, x2)`` pairs; ``x1`` may lie in any
    translate of the base cell.  ``cell_solutions`` must match the grid
    sample for sample.  Terms are summed in ascending sample order.
    """
    sols = list(cell_solutions)
    if len(sols) != len(grid):
        raise ValueError(f"{len(sols)} cell solutions for a grid of {len(grid)} samples")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    for a, s in zip(grid.alpha, sols):
        if abs(s.alpha - a) > 1e-14 * max(1.0, abs(a)):
            raise ValueError(f"cell solution at alpha={s.alpha} does not match sample {a}")
    x1_red, _ = fold(pts[:, 0])
    reduced = np.column_stack([x1_red, pts[:, 1]])

    interp = None
    meshes = {id(getattr(s, "mesh", None)) for s in sols}
    if len(meshes) == 1 and getattr(sols[0], "mesh", None) is not None:
        interp = sols[0].mesh.interpolation_matrix(reduced)

    out = np.zeros(pts.shape[0], dtype=complex)
    for a, w, s in zip(grid.alpha, grid.weight, sols):
        vals = interp @ s.values if interp is not None else s.evaluate(reduced)
        out += w * np.exp(1j * a * pts[:, 0]) * vals
    return out
