import math

import numpy as np
import pytest

from floquet_pml.kernels import NonExceptionalWavenumber
from floquet_pml.quadrature import (MAX_ORDER, CompactField, QuadratureError, bloch_transform,
                                    bruns_brackets, floquet_grid, fold, inverse_bloch,
                                    legendre_eval, legendre_rule, synthesize)


def test_rule_small_orders():
    r1 = legendre_rule(1)
    assert r1.nodes.tolist() == [0.0] and r1.weights[0] == pytest.approx(2, abs=1e-15)
    r2 = legendre_rule(2)
    assert r2.nodes == pytest.approx([-1 / math.sqrt(3), 1 / math.sqrt(3)], abs=1e-15)
    assert r2.weights == pytest.approx([1, 1], abs=1e-15)
    r3 = legendre_rule(3)
    assert r3.nodes == pytest.approx([-math.sqrt(0.6), 0, math.sqrt(0.6)], abs=1e-15)
    assert r3.weights == pytest.approx([5 / 9, 8 / 9, 5 / 9], abs=1e-15)


def test_rule_n16_integrates_x28():
    assert legendre_rule(16).integrate(lambda x: x ** 28) == pytest.approx(2 / 29, abs=1e-13)


@pytest.mark.parametrize("n", range(1, 65))
def test_rule_invariants(n):
    rule = legendre_rule(n)
    assert np.all(rule.weights > 0)
    assert abs(rule.weights.sum() - 2) <= 1e-12
    assert np.all(np.diff(rule.nodes) > 0)
    assert np.max(np.abs(rule.nodes + rule.nodes[::-1])) <= 1e-13
    for p in range(2 * n):
        exact = 2 / (p + 1) if p % 2 == 0 else 0.0
        assert abs(rule.integrate(lambda x: x ** p) - exact) <= 1e-12
    lo, hi = bruns_brackets(n)
    th = rule.angles
    assert np.all(th > lo) and np.all(th < hi)
    j = np.arange(1, n // 2 + 1)
    d1 = rule.nodes[: n // 2] + 1
    assert np.all(j ** 2 / (3 * n * n) < d1) and np.all(d1 < 5 * j ** 2 / (n * n))


def test_rule_matches_numpy_leggauss():
    for n in (5, 40, 128, 300, MAX_ORDER):
        x, w = np.polynomial.legendre.leggauss(n)
        rule = legendre_rule(n)
        assert np.max(np.abs(rule.nodes - x)) <= 1e-13
        assert np.max(np.abs(rule.weights - w)) <= 1e-13


def test_rule_nodes_are_roots():
    rule = legendre_rule(33)
    p, dp = legendre_eval(33, rule.nodes)
    assert np.max(np.abs(p / dp)) <= 1e-15


def test_rule_rejects_bad_order():
    for n in (0, -1, MAX_ORDER + 1, 2.5):
        with pytest.raises(ValueError):
            legendre_rule(n)


def test_rule_reports_nonconvergence():
    with pytest.raises(QuadratureError):
        legendre_rule(40, max_iter=1)


def test_rule_is_immutable():
    rule = legendre_rule(4)
    with pytest.raises(ValueError):
        rule.nodes[0] = 0.0


def test_geometric_convergence_on_analytic_integrand():
    a = 0.5
    exact = 2 * math.atan(1 / a) / a
    err = [abs(legendre_rule(n).integrate(lambda t: 1 / (t * t + a * a)) - exact) for n in range(4, 25)]
    ratios = np.array(err[1:]) / np.array(err[:-1])
    # Bernstein ellipse through the poles +-i a: rho = a + sqrt(a^2 + 1)
    rate = (a + math.sqrt(a * a + 1)) ** -2
    assert ratios.max() < 1
    assert ratios.max() <= 1.05 * rate


def test_grid_examples():
    g = floquet_grid(1, 1)
    assert g.alpha == pytest.approx([0.125, -0.125], abs=1e-16)
    assert g.weight == pytest.approx([0.5, 0.5], abs=1e-15)
    g = floquet_grid(1.5, 1)
    assert g.alpha == pytest.approx([0.625, 0.375], abs=1e-15)
    g = floquet_grid(1, 2)
    s = 1 / math.sqrt(3)
    lo, hi = ((1 - s) / (2 * math.sqrt(2))) ** 2, ((1 + s) / (2 * math.sqrt(2))) ** 2
    assert g.alpha == pytest.approx([lo, hi, -lo, -hi], abs=1e-15)
    assert g.alpha[:2] == pytest.approx([0.0223291, 0.3110042], abs=1e-7)


@pytest.mark.parametrize("k", [1, 1.5, 2.5, 5])
def test_grid_invariants(k):
    c = 0.0 if float(k).is_integer() else 0.5
    for n in range(1, 65):
        g = floquet_grid(k, n)
        assert len(g) == 2 * n and g.center == c
        assert abs(g.weight.sum() - 1) <= 1e-12
        assert np.all(g.weight > 0)
        assert np.all(np.abs(g.alpha - c) > 0) and np.all(np.abs(g.alpha - c) < 0.5)
        assert np.all(np.sign(g.alpha - c) == g.side)
        assert g.separation() >= 1 / (72 * n ** 4)


def test_grid_integrates_singular_profile():
    # int_{-1/2}^{1/2} sqrt|alpha| d alpha = 2/3 (1/2)^{3/2}; smooth after alpha = t^2
    exact = 2 * (2 / 3) * 0.5 ** 1.5
    g = floquet_grid(1, 6)
    assert np.dot(g.weight, np.sqrt(np.abs(g.alpha))) == pytest.approx(exact, abs=1e-13)


def test_grid_rejects_non_exceptional():
    with pytest.raises(NonExceptionalWavenumber):
        floquet_grid(1.3, 4)


def test_fold():
    x, s = fold(np.array([-np.pi, 0.0, np.pi, 3 * np.pi + 0.5, -7.0]))
    assert s.tolist() == [0, 0, 1, 2, -1]
    assert np.all((x >= -np.pi) & (x < np.pi))
    assert x[3] == pytest.approx(-np.pi + 0.5)


def _bump_field(cells=range(-2, 3)):
    def phi(x1, x2):
        r = x1 / 8.0
        return np.where(np.abs(r) < 1, np.cos(np.pi * r / 2) ** 4, 0.0) * np.sin(x2) * (1 + 0.3j * x1)
    x1 = np.linspace(-np.pi, np.pi, 41)
    x2 = np.linspace(0.5, 1.5, 5)
    return phi, CompactField.from_function(phi, cells, x1, x2)


def test_bloch_transform_single_cell():
    phi, field = _bump_field(range(0, 1))
    tr = bloch_transform(field, 0.3)
    expected = field.values[0] * np.exp(-0.3j * field.x1)[:, None]
    assert np.array_equal(tr, expected)


def test_bloch_transform_alpha_zero_is_periodization():
    _, field = _bump_field()
    assert np.allclose(bloch_transform(field, 0.0), field.values.sum(axis=0), atol=1e-15)


def test_bloch_transform_is_periodic():
    _, field = _bump_field()
    for a in (0.0, 0.17, -0.4):
        tr = bloch_transform(field, a)
        assert np.max(np.abs(tr[0] - tr[-1])) <= 1e-13


def test_compact_field_vanishes_outside_support():
    _, field = _bump_field()
    assert not np.any(field(5))
    assert not np.any(field(-3))
    assert field.last_cell == 2


def test_bloch_roundtrip():
    phi, field = _bump_field()
    rule = legendre_rule(64)
    alphas = rule.nodes / 2
    weights = rule.weights / 2
    transforms = [bloch_transform(field, a) for a in alphas]
    for cell in range(-3, 4):
        back = inverse_bloch(alphas, weights, transforms, field.x1, cell)
        assert np.max(np.abs(back - field(cell))) <= 1e-6


class _Synthetic:
    """Stand-in cell solution ``w(alpha, x)`` evaluated pointwise."""

    def __init__(self, alpha, func):
        self.alpha = alpha
        self._f = func

    def evaluate(self, pts):
        return self._f(self.alpha, pts[:, 0], pts[:, 1])


def test_synthesize_zero_and_single_sample():
    g = floquet_grid(1, 3)
    pts = np.array([[0.3, 1.0], [7.0, 2.0]])
    zero = [_Synthetic(a, lambda a, x, y: np.zeros_like(x)) for a in g.alpha]
    assert not np.any(synthesize(g, zero, pts))
    one = [_Synthetic(a, lambda a, x, y: np.ones_like(x)) for a in g.alpha]
    expected = sum(w * np.exp(1j * a * pts[:, 0]) for a, w in zip(g.alpha, g.weight))
    assert np.array_equal(synthesize(g, one, pts), expected)


def test_synthesize_uses_the_cell_shift():
    g = floquet_grid(1.5, 2)
    sols = [_Synthetic(a, lambda a, x, y: np.cos(x) + y) for a in g.alpha]
    base = synthesize(g, sols, np.array([[0.4, 1.0]]))
    shifted = synthesize(g, sols, np.array([[0.4 + 4 * np.pi, 1.0]]))
    # quasi-periodicity sample by sample: factor exp(2 pi i alpha l)
    expected = sum(w * np.exp(1j * a * (0.4 + 4 * np.pi)) * (np.cos(0.4) + 1)
                   for a, w in zip(g.alpha, g.weight))
    assert shifted[0] == pytest.approx(expected, abs=1e-14)
    assert abs(shifted[0] - base[0]) > 1e-3


def test_synthesize_checks_counts_and_alphas():
    g = floquet_grid(1, 2)
    sols = [_Synthetic(a, lambda a, x, y: x) for a in g.alpha]
    with pytest.raises(ValueError):
        synthesize(g, sols[:-1], [[0, 1]])
    with pytest.raises(ValueError):
        synthesize(g, sols[::-1], [[0, 1]])


def test_synthesize_converges_geometrically_to_dense_rule():
    def w(a, x, y):
        return np.sqrt(np.abs(a)) * np.cos(3 * a + x) + y / (1 + a * a)

    pts = np.array([[0.2, 1.0], [-2.0, 1.5], [9.0, 0.7]])
    # dense oracle: numpy's Gauss rule with 4096 points, same substitution
    t, s = np.polynomial.legendre.leggauss(4096)
    u = ((t + 1) / (2 * np.sqrt(2))) ** 2
    dense = np.zeros(len(pts), dtype=complex)
    for a, wt in zip(np.concatenate([u, -u]), np.concatenate([s * (t + 1) / 4] * 2)):
        dense += wt * np.exp(1j * a * pts[:, 0]) * w(a, pts[:, 0], pts[:, 1])
    err = []
    for n in range(1, 11):
        g = floquet_grid(1, n)
        err.append(np.max(np.abs(synthesize(g, [_Synthetic(a, w) for a in g.alpha], pts) - dense)))
    err = np.array(err)
    # oscillatory integrand: single steps may stall, two steps always gain
    assert np.all(err[2:] < 0.5 * err[:-2])
    rate = np.exp(np.polyfit(np.arange(1, 11), np.log(err), 1)[0])
    assert rate < 0.2
    assert err[-1] < 1e-8
