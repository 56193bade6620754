"""Closed-form scalar kernels: branch square roots, DtN and PML symbols.

All functions here are pure and broadcast over numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

#: Below this value of ``|beta * sigma|`` the PML symbol is evaluated by its
#: Laurent expansion around the removable singularity at ``beta = 0``.
LAURENT_SWITCH = 1e-4


class NonExceptionalWavenumber(ValueError):
    """Raised when a wavenumber with ``2k`` not an integer reaches a routine
    that only handles the exceptional case."""


@dataclass(frozen=True)
class Wavenumber:
    """A positive wavenumber together with its cutoff data.

    ``kappa`` is the distance from ``k`` to the nearest integer; ``+-kappa``
    are the Floquet parameters at which a mode hits cutoff.  ``j_plus`` and
    ``j_minus`` are the mode indices with ``kappa + j_plus = k`` and
    ``-kappa + j_minus = -k``.
    """

    k: float
    kappa: float = field(init=False)
    j_plus: int = field(init=False)
    j_minus: int = field(init=False)

    def __post_init__(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ValueError(f"wavenumber must be positive and finite, got {self.k!r}")
        kappa = min(abs(self.k - math.floor(self.k)), abs(math.ceil(self.k) - self.k))
        object.__setattr__(self, "kappa", kappa)
        # the index identities are exact whenever 2k is an integer
        object.__setattr__(self, "j_plus", int(round(self.k - kappa)))
        object.__setattr__(self, "j_minus", int(round(-self.k + kappa)))

    @property
    def exceptional(self) -> bool:
        return float(2 * self.k).is_integer()

    @property
    def critical_center(self) -> float:
        """Center of the Floquet interval used for the exceptional case."""
        if not self.exceptional:
            raise NonExceptionalWavenumber(
                f"k={self.k} is not a half integer; 2k must be an integer"
            )
        return 0.0 if float(self.k).is_integer() else 0.5


@dataclass(frozen=True)
class PmlSpec:
    """Polynomial PML layer of thickness ``lam`` sitting on top of ``x2 = H``.

    The stretching is ``s(x2) = 1 + rho * chi * ((x2 - H) / lam)**m`` inside
    the layer and ``1`` below it.
    """

    lam: float
    rho: float
    m: int = 1
    chi: complex = complex(np.exp(1j * np.pi / 4))
    H: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("PML thickness must be positive")
        if self.rho < 0:
            raise ValueError("PML strength must be nonnegative")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("PML exponent must be a positive integer")
        chi = complex(self.chi)
        if not (chi.real > 0 and chi.imag > 0):
            raise ValueError("PML coefficient needs positive real and imaginary parts")
        object.__setattr__(self, "chi", chi)

    @property
    def top(self) -> float:
        return self.H + self.lam

    @property
    def sigma(self) -> complex:
        return sigma(self)


def branch_sqrt(k, z):
    """``sqrt(k**2 - z**2)`` on the upward-radiating branch.

    Real and nonnegative for ``|z| <= k``, positive imaginary for ``|z| > k``.
    """
    k = np.asarray(k, dtype=float)
    z = np.asarray(z, dtype=float)
    d = (k - z) * (k + z)
    out = np.where(d >= 0, np.sqrt(np.abs(d)) + 0j, 1j * np.sqrt(np.abs(d)))
    return out[()] if out.ndim == 0 else out


def sigma(pml: PmlSpec) -> complex:
    """Integrated stretching ``int_H^{H+lam} s(x2) dx2``."""
    return complex(pml.lam * (1 + pml.rho * pml.chi / (pml.m + 1)))


def stretch(x2, pml: PmlSpec):
    """Complex stretching factor ``s(x2)``; defined up to the layer top."""
    x2 = np.asarray(x2, dtype=float)
    if np.any(x2 > pml.top + 1e-12 * max(1.0, abs(pml.top))):
        raise ValueError(f"x2 above the PML top {pml.top}")
    t = np.clip((x2 - pml.H) / pml.lam, 0.0, 1.0)
    out = np.where(x2 < pml.H, 1.0 + 0j, 1.0 + pml.rho * pml.chi * t**pml.m)
    return out[()] if out.ndim == 0 else out


def dtn_coeff(k, alpha, j):
    """DtN symbol ``beta_j = sqrt(k**2 - (alpha + j)**2)``.

    The boundary term of the weak form uses ``1j * beta_j``.
    """
    return branch_sqrt(k, np.asarray(alpha, dtype=float) + np.asarray(j))


def pml_coeff(k, alpha, j, sigma):
    """PML-modified symbol ``h = beta * coth(-1j * beta * sigma)``.

    At ``beta = 0`` the removable singularity is filled with ``1j / sigma``.
    The large-argument branch is written as ``beta + 2 beta / expm1(2 z)``
    so that ``h - beta`` keeps full relative accuracy.
    """
    sigma = complex(sigma)
    if sigma == 0:
        raise ValueError("sigma must be nonzero")
    beta = np.asarray(dtn_coeff(k, alpha, j), dtype=complex)
    z = -1j * beta * sigma
    small = np.abs(z) < LAURENT_SWITCH
    out = np.empty_like(beta)

    zs = z[small]
    bs = beta[small]
    # beta*coth(z) = beta/z + beta*z/3 - beta*z**3/45 with beta/z = 1j/sigma
    out[small] = 1j / sigma + bs * zs / 3 - bs * zs**3 / 45

    zl = z[~small]
    bl = beta[~small]
    # the branch keeps Re(z) >= 0; past ~700 the correction underflows
    huge = zl.real > 350
    corr = np.zeros_like(zl)
    ok = ~huge
    corr[ok] = 2 * bl[ok] / np.expm1(2 * zl[ok])
    out[~small] = bl + corr
    return out[()] if out.ndim == 0 else out


def pml_coeff_direct(k, alpha, j, sigma):
    """Unguarded ``beta / tanh(-1j beta sigma)``; reference for the switch."""
    beta = np.asarray(dtn_coeff(k, alpha, j), dtype=complex)
    return beta / np.tanh(-1j * beta * complex(sigma))


def pml_gap_bound(k: float, delta: float, sigma: complex) -> float:
    """Certified upper bound on ``|h - beta|`` for real ``z`` at distance
    at least ``delta`` from ``+-k``.

    Returns the larger of the propagating-side bound
    ``2 sqrt(2) / s2 * exp(-sqrt(k delta) s2)`` and the evanescent-side bound
    ``sqrt(6) / s1 * exp(-sqrt(2 k delta) s1)`` where ``sigma = s1 + 1j s2``.
    """
    s1, s2 = complex(sigma).real, complex(sigma).imag
    if not 0 < delta < k:
        raise ValueError("need 0 < delta < k")
    if s1 <= 0 or s2 <= 0:
        raise ValueError("sigma needs positive real and imaginary parts")
    prop = 2 * math.sqrt(2) / s2 * math.exp(-math.sqrt(k * delta) * s2)
    evan = math.sqrt(6) / s1 * math.exp(-math.sqrt(2 * k * delta) * s1)
    return max(prop, evan)
