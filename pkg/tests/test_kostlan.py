import dataclasses
import math

import numpy as np
import pytest

from zerovar.constants import positivity_lower_bound
from zerovar.geometry import DimPair
from zerovar.jacobian import PairedColumnLaw, moment_odet_pair_law
from zerovar.kostlan import (F_d, F_limit, chaos_b2_mc, chaos_coefficients, conditional_column_law, hermite,
                             jet_covariance_blocks, jet_covariance_from_kernel, jnr_integral,
                             kac_rice_density_kss, log_kss_norm, sample_kostlan, second_chaos_limit,
                             second_chaos_variance, wick_second_chaos, xi_d, xi_d_jet)
from zerovar.stats import Moments, RngStream
from zerovar.zeros import count_kss_roots


def many(n, d, N, seed):
    """N independent KSS polynomials packed as the rows of one sample."""
    base = sample_kostlan(n, d, 1, RngStream(seed))
    coeffs = RngStream(seed, 1).generator().standard_normal((N, base.coeffs.shape[1]))
    return dataclasses.replace(base, r=N, coeffs=coeffs)


def test_sample_sizes():
    s = sample_kostlan(1, 2, 1, RngStream(0))
    assert s.coeffs.shape == (1, 3)
    assert sample_kostlan(3, 4, 2, RngStream(0)).coeffs.shape == (2, math.comb(7, 3))
    with pytest.raises(ValueError):
        sample_kostlan(1, 0, 1, RngStream(0))


def test_chart_variance_is_kss_norm():
    s = many(2, 5, 100_000, 1)
    vals = s.evaluate_chart(np.array([0.3, -0.7]))
    m = Moments.from_array(vals)
    K = math.exp(log_kss_norm(5, 2))
    assert abs(m.var - K) < 3 * m.var_stderr


def test_chart_correlation_is_xi():
    s = many(2, 6, 100_000, 2)
    z = np.array([0.4, 0.2])
    a = s.evaluate_chart(np.zeros(2))
    b = s.evaluate_chart(z)
    rho = np.corrcoef(a, b)[0, 1]
    target = xi_d(np.zeros(2), z, 6)
    assert target == pytest.approx((1 + z @ z) ** -3)
    assert abs(rho - target) < 3 * (1 - target**2) / math.sqrt(a.size)


def test_rotation_invariance_of_covariance():
    s = many(2, 4, 200_000, 3)
    gen = np.random.default_rng(0)
    x = np.array([1.0, 0.2, -0.3])
    y = np.array([0.5, 1.0, 0.4])
    q, _ = np.linalg.qr(gen.standard_normal((3, 3)))
    c1 = Moments.from_array(s.evaluate(x) * s.evaluate(y))
    c2 = Moments.from_array(s.evaluate(q @ x) * s.evaluate(q @ y))
    assert abs(c1.mean - c2.mean) < 3 * math.hypot(c1.stderr, c2.stderr)
    assert abs(c1.mean - (x @ y) ** 4) < 3 * c1.stderr  # normalized kernel <x, y>^d


def test_value_and_derivative_are_independent():
    s = many(2, 7, 100_000, 4)
    z = np.array([0.5, -0.2])
    h = 1e-6
    v = s.evaluate_chart(z)
    for e in np.eye(2):
        deriv = (s.evaluate_chart(z + h * e) - s.evaluate_chart(z - h * e)) / (2 * h)
        assert abs(np.corrcoef(v, deriv)[0, 1]) < 3 / math.sqrt(v.size)


@pytest.mark.parametrize("w, z, d, expected", [
    ([0.3, 1.0], [0.3, 1.0], 7, 1.0),
    ([0.0, 0.0], [1.0, 2.0], 3, 6.0 ** -1.5),
    ([1.0], [-1.0], 2, 0.0),
])
def test_xi_examples(w, z, d, expected):
    assert xi_d(w, z, d) == pytest.approx(expected, abs=1e-15)


def test_xi_negative_base_odd_degree():
    assert xi_d([2.0], [-1.0], 3) < 0


def test_xi_jet_examples_and_differences():
    gx, _, h = xi_d_jet(np.zeros(3), np.zeros(3), 4)
    assert np.allclose(gx, 0) and np.allclose(h, 4 * np.eye(3))
    w, z, d = np.array([0.3, 0.0]), np.array([0.1, 0.2]), 5
    gx, gy, hxy = xi_d_jet(w, z, d)
    f = lambda a, b: xi_d(a, b, d)
    e = np.eye(2)
    step = 1e-5
    fx = np.array([(f(w + step * e[i], z) - f(w - step * e[i], z)) / (2 * step) for i in range(2)])
    fy = np.array([(f(w, z + step * e[j]) - f(w, z - step * e[j])) / (2 * step) for j in range(2)])
    step = 1e-4
    fh = np.array([[(f(w + step * e[i], z + step * e[j]) - f(w + step * e[i], z - step * e[j])
                     - f(w - step * e[i], z + step * e[j]) + f(w - step * e[i], z - step * e[j])) / (4 * step**2)
                    for j in range(2)] for i in range(2)])
    assert np.max(np.abs(gx - fx)) < 1e-6
    assert np.max(np.abs(gy - fy)) < 1e-6
    assert np.max(np.abs(hxy - fh)) < 1e-6


def test_blocks_examples():
    b0 = jet_covariance_blocks(0.0, 7)
    assert np.allclose(b0.A, np.ones((2, 2)))
    b = jet_covariance_blocks(0.5, 10)
    assert np.allclose(b.B, -b.B.T) and b.B[0, 0] == 0
    assert b.B[0, 1] == pytest.approx(math.sqrt(5) * 1.5**-5)
    assert np.linalg.eigvalsh(b.assembled(3))[0] >= -1e-10


@pytest.mark.parametrize("n", [1, 2, 4])
@pytest.mark.parametrize("t, d", [(0.05, 3), (0.37, 7), (2.0, 20)])
def test_blocks_match_kernel_jets(n, t, d):
    assert np.max(np.abs(jet_covariance_blocks(t, d).assembled(n) - jet_covariance_from_kernel(t, d, n))) < 1e-13


@pytest.mark.parametrize("n", [1, 2, 3])
def test_F_d_values(n):
    assert F_d(0.0, 9, n) == pytest.approx(n * n + n)
    assert F_d(2.0, 1e6, n) == pytest.approx(F_limit(2.0, n), rel=1e-4)


@pytest.mark.parametrize("pair", [DimPair(1, 1), DimPair(2, 1), DimPair(3, 2)], ids=str)
def test_F_d_matches_wick(pair):
    d, t = 8, 0.3
    assert abs(2 * pair.r * F_d(d * t, d, pair.n) - wick_second_chaos(t, d, pair)) < 1e-10


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_jnr_gamma_limit(n):
    res = jnr_integral(1e6, DimPair(n, 1))
    assert abs(res.bare_integral - math.gamma(n / 2 + 2)) < 1e-3


@pytest.mark.parametrize("n", [1, 2, 3])
def test_jnr_scaling(n):
    pair = DimPair(n, 1)
    ratio = jnr_integral(4e5, pair).J / jnr_integral(1e5, pair).J
    assert ratio == pytest.approx(2.0**-n, rel=1e-2)


def test_jnr_threshold():
    with pytest.raises(ValueError):
        jnr_integral(3, DimPair(4, 1))
    assert jnr_integral(4, DimPair(4, 1)).J > 0


@pytest.mark.parametrize("pair", [DimPair(1, 1), DimPair(2, 1), DimPair(2, 2), DimPair(3, 2)], ids=str)
def test_second_chaos_limit(pair):
    assert second_chaos_variance(1e5, pair).rel_err < 1e-2


def test_second_chaos_one_one_limit_value():
    assert second_chaos_limit(DimPair(1, 1)) == pytest.approx(3 / (8 * math.sqrt(math.pi)))
    assert second_chaos_limit(DimPair(1, 1)) == pytest.approx(positivity_lower_bound(DimPair(1, 1)) * math.pi)


@pytest.mark.parametrize("d", [10, 50, 1000])
@pytest.mark.parametrize("pair", [DimPair(1, 1), DimPair(2, 2), DimPair(4, 3)], ids=str)
def test_second_chaos_positive(d, pair):
    assert second_chaos_variance(d, pair).var2 > 0


def test_chaos_coefficients():
    c = chaos_coefficients(DimPair(1, 1))
    assert c.B0 == pytest.approx(math.sqrt(2 / math.pi))
    assert c.B2 == pytest.approx(1 / math.sqrt(math.pi))
    for n, r in [(2, 1), (5, 3)]:
        c = chaos_coefficients(DimPair(n, r))
        assert c.B2 / c.B0 == pytest.approx(1 / (n * math.sqrt(2)), rel=1e-15)


def test_chaos_b2_monte_carlo():
    pair = DimPair(3, 2)
    mean, se = chaos_b2_mc(pair, 1_000_000, RngStream(21))
    assert abs(mean - chaos_coefficients(pair).B2) < 3 * se


@pytest.mark.parametrize("k, x, expected", [(2, 2.0, 3.0), (4, 0.0, 3.0), (3, 0.0, 0.0), (0, 5.0, 1.0), (1, -2.0, -2.0)])
def test_hermite(k, x, expected):
    assert hermite(k, x) == pytest.approx(expected)


def test_hermite_orthogonality():
    x, w = np.polynomial.hermite_e.hermegauss(30)
    w = w / w.sum()
    for j in range(5):
        for k in range(5):
            assert np.sum(w * hermite(j, x) * hermite(k, x)) == pytest.approx(math.factorial(k) * (j == k), abs=1e-10)


def test_density_decorrelates():
    dens, se = kac_rice_density_kss(10.0, 50, DimPair(1, 1), 100_000, RngStream(22))
    assert abs(dens) < 3 * se + 1e-6


def test_density_swap_symmetry():
    pair = DimPair(2, 1)
    law, _ = conditional_column_law(0.02, 30, pair)
    swap = np.array([[0, 1], [1, 0]])
    swapped = PairedColumnLaw(pair, swap @ law.first @ swap, swap @ law.rest @ swap)
    assert np.allclose(swapped.first, law.first) and np.allclose(swapped.rest, law.rest)
    a = moment_odet_pair_law(law, 20_000, RngStream(23))
    b = moment_odet_pair_law(swapped, 20_000, RngStream(23))
    assert a[0] == pytest.approx(b[0], rel=1e-12)


def test_density_rejects_tiny_separation():
    with pytest.raises(ValueError):
        kac_rice_density_kss(1e-12, 10, DimPair(1, 1), 100, RngStream(0))


def test_odd_chaoses_vanish():
    d, N = 20, 100_000
    a = RngStream(24).generator().standard_normal((N, d + 1))
    counts = count_kss_roots(a, d).counts.astype(float)
    for k in range(4):
        for deg in (1, 3):
            m = Moments.from_array(counts * hermite(deg, a[:, k]))
            assert abs(m.mean) < 3 * m.stderr
