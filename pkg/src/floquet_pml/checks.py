"""Invariant suites shared by the ``selftest`` and ``quadrature`` commands.

Each check returns a :class:`CheckResult`; nothing here raises on a
failed invariant, so callers can report every line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .quadrature import GaussRule, bruns_brackets, floquet_grid, legendre_rule

EXCEPTIONAL_K = (1.0, 1.5, 2.5, 5.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


def _monomial_error(rule: GaussRule) -> float:
    """Worst error over monomials of degree <= 2N-1."""
    worst = 0.0
    for p in range(2 * rule.order):
        exact = 2.0 / (p + 1) if p % 2 == 0 else 0.0
        worst = max(worst, abs(rule.integrate(lambda x: x ** p) - exact))
    return worst


def rule_checks(rule: GaussRule) -> list[CheckResult]:
    """Weight sum, exactness, symmetry, Bruns brackets and the cosine bounds."""
    n = rule.order
    out = []
    wsum = float(np.sum(rule.weights))
    out.append(CheckResult(f"N={n} weights positive, sum 2",
                           bool(np.all(rule.weights > 0)) and abs(wsum - 2) <= 1e-12,
                           f"|sum-2|={abs(wsum - 2):.1e}"))
    err = _monomial_error(rule)
    out.append(CheckResult(f"N={n} exact through degree {2 * n - 1}", err <= 1e-12, f"max err {err:.1e}"))
    sym = float(np.max(np.abs(rule.nodes + rule.nodes[::-1])))
    out.append(CheckResult(f"N={n} nodes symmetric", sym <= 1e-13, f"{sym:.1e}"))
    lo, hi = bruns_brackets(n)
    th = rule.angles
    out.append(CheckResult(f"N={n} nodes inside Bruns brackets", bool(np.all((th > lo) & (th < hi)))))
    j = np.arange(1, n // 2 + 1)
    d1 = rule.nodes[: n // 2] + 1.0
    ok = bool(np.all((d1 > j ** 2 / (3 * n * n)) & (d1 < 5 * j ** 2 / (n * n))))
    out.append(CheckResult(f"N={n} cosine bounds on d_j + 1", ok))
    return out


def grid_separation_check(k: float, n: int) -> CheckResult:
    grid = floquet_grid(k, n)
    sep = grid.separation()
    bound = 1.0 / (72 * n ** 4)
    wsum = float(np.sum(grid.weight))
    ok = sep >= bound and abs(wsum - 1) <= 1e-12
    return CheckResult(f"grid k={k:g} N={n} separation and total weight", ok,
                       f"sep={sep:.3e} bound={bound:.3e}")


def gap_certificate_check(samples: int = 10_000, seed: int = 0) -> CheckResult:
    """Random ``(k, delta, sigma, z)`` away from the cutoffs; count bound violations."""
    rng = np.random.default_rng(seed)
    k = rng.uniform(0.2, 8.0, samples)
    delta = rng.uniform(0.01, 0.99, samples) * k
    s = rng.uniform(0.1, 10, samples) + 1j * rng.uniform(0.1, 10, samples)
    side = rng.integers(0, 3, samples)
    u = rng.uniform(0, 1, samples)
    z = np.where(side == 0, (2 * u - 1) * (k - delta),
                 np.where(side == 1, 1, -1) * (k + delta + 10 * u))
    h = np.array([kernels.pml_coeff(a, b, 0, c) for a, b, c in zip(k, z, s)])
    gap = np.abs(h - kernels.branch_sqrt(k, z))
    bound = np.array([kernels.pml_gap_bound(a, b, c) for a, b, c in zip(k, delta, s)])
    bad = int(np.sum(gap > bound))
    return CheckResult(f"PML gap certificate on {samples} samples", bad == 0, f"{bad} violations")


def branch_check(samples: int = 10_000, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    k = rng.uniform(0.1, 10, samples)
    z = rng.uniform(-20, 20, samples)
    b = kernels.branch_sqrt(k, z)
    target = k * k - z * z
    rel = np.abs(b * b - target) / np.maximum(np.abs(target), k * k)
    ok = float(rel.max()) <= 1e-13 and bool(np.all(b.real >= 0) and np.all(b.imag >= 0))
    return CheckResult(f"branch square root on {samples} samples", ok, f"max rel {rel.max():.1e}")


def laurent_check() -> CheckResult:
    s = 1.2 + 0.9j
    beta = kernels.LAURENT_SWITCH / abs(s)
    z = math.sqrt(1.0 - beta * beta)
    a = kernels.pml_coeff(1.0, np.nextafter(z, 2), 0, s)
    b = kernels.pml_coeff(1.0, np.nextafter(z, 0), 0, s)
    rel = abs(a - b) / abs(b)
    return CheckResult("PML coefficient continuous at the Laurent switch", rel <= 1e-10, f"{rel:.1e}")


def selftest(max_order: int = 64, samples: int = 10_000) -> list[CheckResult]:
    """Fast invariant suites for the kernels and the quadrature module."""
    results = [branch_check(samples), laurent_check(), gap_certificate_check(samples)]
    for n in range(1, max_order + 1):
        rc = rule_checks(legendre_rule(n))
        results.append(CheckResult(f"Gauss-Legendre N={n}", all(r.ok for r in rc),
                                   "; ".join(r.name for r in rc if not r.ok)))
    for k in EXCEPTIONAL_K:
        gs = [grid_separation_check(k, n) for n in range(1, max_order + 1)]
        results.append(CheckResult(f"Floquet grid k={k:g}, N=1..{max_order}", all(g.ok for g in gs),
                                   "; ".join(g.detail for g in gs if not g.ok)))
    return results
