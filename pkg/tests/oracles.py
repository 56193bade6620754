"""Independent reference solutions used by the FEM and acceptance tests."""
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from floquet_pml.fem import SourceTerm

# degree-4 six-point triangle rule (Dunavant)
_A1, _A2 = 0.445948490915965, 0.091576213509771
_W1, _W2 = 0.223381589678011, 0.109951743655322
DUNAVANT_BARY = np.array([
    [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
])
DUNAVANT_W = np.array([_W1] * 3 + [_W2] * 3)


def cos4_bump(x2, center=1.0, half_width=0.8):
    r = (np.asarray(x2, dtype=float) - center) / half_width
    out = np.zeros_like(r)
    m = np.abs(r) < 1
    out[m] = np.cos(np.pi * r[m] / 2) ** 4
    return out


def single_mode_source(alpha, ell=0):
    """``f = exp(i (alpha + ell) x1) g(x2)`` so the cell right side is ``exp(i ell x1) g``."""
    return SourceTerm(lambda x1, x2: np.exp(1j * (alpha + ell) * x1) * cos4_bump(x2),
                      ("box", -np.pi, np.pi, 0.2, 1.8))


def fd_two_point(k, alpha, H, g=cos4_bump, n=200_000):
    """Second-order finite differences for ``W'' + (k^2 - alpha^2) W = g``,
    ``W(0) = 0``, ``W'(H) = i beta_0 W(H)``; returns a cubic-spline interpolant."""
    y = np.linspace(0.0, H, n + 1)
    dy = H / n
    kk = k * k - alpha * alpha
    b0 = np.sqrt(kk + 0j)
    main = np.full(n + 1, -2 / dy ** 2 + kk, dtype=complex)
    off = np.full(n, 1 / dy ** 2, dtype=complex)
    A = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    rhs = g(y).astype(complex)
    A[0, :] = 0
    A[0, 0] = 1
    rhs[0] = 0
    # ghost point eliminated with the centered radiation condition
    A[n, n - 1] = 2 / dy ** 2
    A[n, n] = -2 / dy ** 2 + kk + 2j * b0 / dy
    W = spla.spsolve(A.tocsc(), rhs)
    re, im = CubicSpline(y, W.real), CubicSpline(y, W.imag)
    return lambda x2: re(x2) + 1j * im(x2)


def l2_error(mesh, values, exact):
    """Relative L2 distance between a P1 field and ``exact(x1, x2)``."""
    P = mesh.vertices[mesh.triangles]
    area = np.abs(mesh.signed_areas())
    q = np.einsum("qa,tad->tqd", DUNAVANT_BARY, P)
    uh = np.einsum("qa,ta->tq", DUNAVANT_BARY, values[mesh.triangles])
    ex = exact(q[..., 0], q[..., 1])
    w = area[:, None] * DUNAVANT_W
    return float(np.sqrt((w * np.abs(uh - ex) ** 2).sum() / (w * np.abs(ex) ** 2).sum()))
