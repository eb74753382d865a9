import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from powershare import spectral
from powershare.errors import GraphError
from powershare.graph import build_graph, laplacian, random_connected_graph

L2 = np.array([[1.0, -1.0], [-1.0, 1.0]])


def test_perturbed_system_matrix_examples(golden_laplacian):
    np.testing.assert_array_equal(spectral.perturbed_system_matrix(L2, 1, 10), [[-11, 1], [1, -1]])
    M = spectral.perturbed_system_matrix(golden_laplacian, 1, 10)
    assert M[0, 0] == -28
    np.testing.assert_array_equal(M[1:, 1:], -golden_laplacian[1:, 1:])
    np.testing.assert_allclose(spectral.perturbed_system_matrix(L2, 2, 1e-12), -L2, atol=1e-12)
    with pytest.raises(ValueError, match="h must be positive"):
        spectral.perturbed_system_matrix(L2, 1, 0)
    with pytest.raises(ValueError):
        spectral.perturbed_system_matrix(L2, 3, 1)


def test_eigenvalues_two_node():
    rep = spectral.eigenvalues_sym(L2)
    np.testing.assert_allclose(rep.eigenvalues, [0, 2], atol=1e-15)
    rep = spectral.eigenvalues_sym(spectral.perturbed_system_matrix(L2, 1, 10))
    expected = [(-12 - math.sqrt(104)) / 2, (-12 + math.sqrt(104)) / 2]
    np.testing.assert_allclose(rep.eigenvalues, expected, rtol=1e-14)
    assert rep.dominant == pytest.approx(-0.9010, abs=1e-4)
    with pytest.raises(ValueError, match="not symmetric"):
        spectral.eigenvalues_sym(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_six_dg_spectrum(golden_laplacian):
    rep = spectral.eigenvalues_sym(golden_laplacian)
    assert abs(rep.eigenvalues[0]) < 1e-12 * 30
    assert np.all(rep.eigenvalues[1:] > 0)
    ok, rep = spectral.verify_hurwitz(golden_laplacian, 1, 10)
    assert ok
    np.testing.assert_allclose(rep.eigenvalues, [-37.0731, -33.7643, -24.1260, -12.0, -9.9107, -1.12582], atol=1e-4)
    for k in range(1, 7):
        assert spectral.verify_hurwitz(golden_laplacian, k, 10)[0]


def test_verify_hurwitz_examples():
    ok, rep = spectral.verify_hurwitz(L2, 1, 1)
    assert ok
    np.testing.assert_allclose(rep.eigenvalues, [(-3 - math.sqrt(5)) / 2, (-3 + math.sqrt(5)) / 2], rtol=1e-14)
    assert not spectral.verify_hurwitz(L2, 1, 0)[0]
    with pytest.raises(GraphError, match="not connected"):
        spectral.verify_hurwitz(laplacian(build_graph(3, [(1, 2, 1)])), 1, 1)


def test_sweep_examples(golden_laplacian):
    got = spectral.dominant_eigenvalue_sweep(L2, 1, [1, 10, 100])
    closed = [(-(2 + h) + math.sqrt(h * h + 4)) / 2 for h in (1, 10, 100)]
    np.testing.assert_allclose(got, closed, rtol=1e-12)
    np.testing.assert_allclose(got, [-0.3820, -0.9010, -0.9900], atol=1e-4)
    with pytest.raises(ValueError):
        spectral.dominant_eigenvalue_sweep(L2, 1, [1, 1, 10])
    pair = spectral.dominant_eigenvalue_sweep(golden_laplacian, 1, [1, 10])
    lower = spectral.weyl_lower_bound(golden_laplacian)
    assert lower < pair[1] < pair[0] < 0


def test_delta_bound_examples():
    b = spectral.delta_bound(2400, 1600, 6, 0.3)
    assert b.delta_max == pytest.approx(720 / (1 + math.sqrt(6)), rel=1e-15)
    assert b.delta_max == pytest.approx(208.80, rel=1e-3)
    sup = spectral.sup_delta_bound(2400, 1600, 6)
    assert sup == pytest.approx(800 / (1 + math.sqrt(6)), rel=1e-15)
    assert sup == pytest.approx(231.99, rel=1e-3)
    with pytest.raises(ValueError, match="load exceeds capacity"):
        spectral.delta_bound(2400, 2400, 6, 0.1)
    with pytest.raises(ValueError, match="theta out of range"):
        spectral.delta_bound(2400, 1600, 6, 0.34)


def test_transient_band():
    assert spectral.transient_band(2400, 0.3) == pytest.approx((1680, 3120))
    assert spectral.transient_band(2400, 0.0) == (2400, 2400)
    low, high = spectral.transient_band(2400, 1 / 3)
    assert low == pytest.approx(1600) and high == pytest.approx(3200)


def test_addition_threshold_small_n():
    assert spectral.capacity_addition_threshold(1, 1) == pytest.approx((math.sqrt(2) - 1) / 2, rel=1e-15)
    assert spectral.addition_ratio(1) == pytest.approx(0.2071, abs=1e-4)
    assert 0.45 < spectral.addition_ratio(100) < 0.5
    assert 0.4995 < spectral.addition_ratio(10**6) < 0.5
    for n in (3, 8, 50):
        direct = n * (math.sqrt(n + 1) - math.sqrt(n)) / (1 + math.sqrt(n))
        assert spectral.addition_ratio(n) == pytest.approx(direct, rel=1e-12)


def test_addition_ratio_monotone():
    ns = np.unique(np.logspace(0, 6, 400).astype(int))
    ratios = [spectral.addition_ratio(int(n)) for n in ns]
    assert np.all(np.diff(ratios) > 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_eigen_residuals(n, seed):
    g = random_connected_graph(np.random.default_rng(seed), n)
    L = laplacian(g)
    lam, V = np.linalg.eigh(L)
    np.testing.assert_allclose(spectral.eigenvalues_sym(L).eigenvalues, lam, atol=1e-12 * np.abs(L).max())
    for i in range(n):
        assert np.linalg.norm(L @ V[:, i] - lam[i] * V[:, i]) <= 1e-8 * np.linalg.norm(L)


def test_addition_threshold_quoted_precision():
    # the quoted thresholds are given to two significant figures
    assert round(spectral.capacity_addition_threshold(1.0, 3), 3) == 0.098
    assert round(spectral.capacity_addition_threshold(1.0, 8), 3) == 0.045
