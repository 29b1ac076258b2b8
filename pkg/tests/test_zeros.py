import math

import numpy as np
import pytest

from zerovar.stats import RngStream
from zerovar.zeros import (check_counts, count_from_grid, count_kss_roots, count_real_roots,
                           crofton_length_stats, empirical_root_stats, grid_points, random_plane,
                           restricted_coefficients, sqrt_binomials, sturm_count, trig_basis)


@pytest.mark.parametrize("coeffs, expected", [([1, 0, 1], 0), ([-1, 0, 1], 2), ([2, -3, 1], 2), ([5.0], 0)])
def test_count_examples(coeffs, expected):
    assert count_real_roots(coeffs) == (expected, False)
    assert sturm_count(coeffs) == expected


def test_count_flags_double_root():
    res = count_real_roots(np.polynomial.polynomial.polyfromroots([1.0, 1.0, -2.0]))
    assert res.ill_conditioned


def test_zero_polynomial_rejected():
    with pytest.raises(ValueError):
        count_real_roots([0.0, 0.0])


def draws(d, N, seed):
    """Integer-scaled KSS coefficients, exactly representable for the Sturm oracle."""
    a = RngStream(seed).generator().standard_normal((N, d + 1))
    return np.round(a * sqrt_binomials(d) * 2**20)


@pytest.mark.parametrize("N", [25, pytest.param(200, marks=pytest.mark.slow)])
def test_companion_matches_sturm(N):
    for c in draws(30, N, 31):
        assert count_real_roots(c).count == sturm_count(c)


@pytest.mark.parametrize("d", [1, 2, 7, 30, 120])
def test_grid_counter_matches_companion(d):
    a = RngStream(32, d).generator().standard_normal((300, d + 1))
    grid = count_kss_roots(a, d).counts
    w = sqrt_binomials(d)
    comp = [count_real_roots(row * w).count for row in a]
    assert np.array_equal(grid, comp)


def test_grid_counter_exact_zero_on_grid():
    # f = sin(theta) vanishes at the grid point theta = 0
    d = 1
    th = grid_points(d)
    res = count_from_grid(np.sin(th)[None, :], d, coeffs_of=lambda i: np.array([0.0, 1.0]))
    assert res.counts[0] == 1


def test_trig_basis_unit_variance():
    B = trig_basis(40)
    assert np.allclose(np.sum(B**2, axis=0), 1.0)


def test_check_counts():
    check_counts(np.array([1, 3, 5]), 5)
    with pytest.raises(AssertionError):
        check_counts(np.array([2]), 5)
    with pytest.raises(AssertionError):
        check_counts(np.array([7]), 5)


def test_degree_one_has_one_root():
    st = empirical_root_stats(1, 1000, RngStream(33))
    assert st.mean == 1.0 and st.var == 0.0


@pytest.mark.parametrize("d", [4, 25, 100])
def test_mean_is_sqrt_d(d):
    st = empirical_root_stats(d, 20_000, RngStream(34, d))
    assert abs(st.mean - math.sqrt(d)) < st.mean_ci


def test_stats_reproducible_across_threads():
    a = empirical_root_stats(30, 6000, RngStream(35), batch=1000, threads=1)
    b = empirical_root_stats(30, 6000, RngStream(35), batch=1000, threads=3)
    assert a == b


def test_histogram_totals():
    st, hist = empirical_root_stats(9, 3000, RngStream(36), histogram=True)
    assert hist.sum() == 3000 and np.all(hist[::2] == 0)  # only odd counts for odd degree
    assert np.dot(np.arange(10), hist) / 3000 == pytest.approx(st.mean)


def test_crofton_degree_one():
    st = crofton_length_stats(1, 30, 7, RngStream(37))
    assert st.mean == pytest.approx(math.pi, abs=1e-12) and st.var < 1e-20


def test_restriction_is_kss():
    d, N = 5, 20_000
    gen = RngStream(38).generator()
    u, v = random_plane(gen)
    from zerovar.kostlan import monomial_table

    expo, _ = monomial_table(2, d)
    coeffs = gen.standard_normal((N, expo.shape[0]))
    b = np.array([restricted_coefficients(c, d, u, v) for c in coeffs[:2000]])
    # check the linear map directly on all draws: b = coeffs @ R with R R^t compared to identity
    R = np.array([restricted_coefficients(e, d, u, v) for e in np.eye(expo.shape[0])])
    assert np.allclose(coeffs[:2000] @ R, b)
    full = coeffs @ R
    emp = full.T @ full / N
    se = np.sqrt((1 + np.eye(d + 1)) / N)
    assert np.all(np.abs(emp - np.eye(d + 1)) < 3 * se)


def test_random_plane_orthonormal():
    u, v = random_plane(np.random.default_rng(0))
    assert np.allclose([u @ u, v @ v, u @ v], [1, 1, 0])
