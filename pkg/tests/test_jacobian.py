import math

import numpy as np
import pytest

from zerovar.gaussian import odet
from zerovar.geometry import DimPair, all_pairs
from zerovar.jacobian import (XYLaw, bivariate_abs_product, decorrelated_moment, dnr, gram_statistics,
                              moment_closed_form_1d, moment_curve, moment_odet_pair, odet_pair_from_stats,
                              sample_xy, small_t_moment_limit, small_t_slope, _combine)
from zerovar.limit_model import lambda_tilde
from zerovar.stats import RngStream


def cov_se(x, y):
    """Sample covariance and its standard error."""
    xc, yc = x - x.mean(), y - y.mean()
    prod = xc * yc
    return prod.mean(), prod.std(ddof=1) / math.sqrt(x.size)


@pytest.mark.parametrize("entry, target", [
    ((0, 0), lambda_tilde(1.0)),
    ((0, 1), np.array([[1.0, math.exp(-0.5)], [math.exp(-0.5), 1.0]])),
])
def test_sample_xy_entry_covariance(entry, target):
    X, Y = sample_xy(XYLaw(1.0, DimPair(2, 1)), RngStream(3), 1_000_000)
    x, y = X[:, entry[0], entry[1]], Y[:, entry[0], entry[1]]
    for (a, b), want in [((x, x), target[0, 0]), ((x, y), target[0, 1]), ((y, y), target[1, 1])]:
        got, se = cov_se(a, b)
        assert abs(got - want) < 3 * se


def test_sample_xy_decorrelates():
    X, Y = sample_xy(XYLaw(50.0, DimPair(2, 1)), RngStream(4), 200_000)
    got, se = cov_se(X[:, 0, 1], Y[:, 0, 1])
    assert abs(got) < 3 * se


def test_sample_xy_single_draw_shape():
    X, Y = sample_xy(XYLaw(1.0, DimPair(3, 2)), RngStream(0))
    assert X.shape == Y.shape == (2, 3)


def test_gram_fast_path_matches_direct():
    gen = np.random.default_rng(1)
    pair = DimPair(4, 3)
    A = gen.standard_normal((500, 3, 4))
    B = gen.standard_normal((500, 3, 4))
    S1, S = XYLaw(0.7, pair).roots()
    X, Y = _combine(A, B, S1, S)
    ox, oy = odet_pair_from_stats(gram_statistics(A, B), S1, S)
    assert np.allclose(ox, odet(X)) and np.allclose(oy, odet(Y))


def test_bivariate_formula_by_quadrature():
    from scipy import integrate

    rho = 0.4
    dens = lambda u, v: np.exp(-(u * u - 2 * rho * u * v + v * v) / (2 * (1 - rho**2))) / (
        2 * math.pi * math.sqrt(1 - rho**2))
    val, _ = integrate.dblquad(lambda v, u: abs(u * v) * dens(u, v), -9, 9, -9, 9, epsabs=1e-10)
    assert bivariate_abs_product(1.0, rho) == pytest.approx(val, rel=1e-7)


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_moment_1d_closed_form(t):
    est = moment_odet_pair(t, DimPair(1, 1), 400_000, RngStream(5))
    assert abs(est.mean - moment_closed_form_1d(t)) < 3 * est.stderr


@pytest.mark.parametrize("pair", all_pairs(4), ids=str)
def test_moment_large_t(pair):
    est = moment_odet_pair(30.0, pair, 100_000, RngStream(6, pair.n * 10 + pair.r))
    assert abs(est.mean - decorrelated_moment(pair)) < 3 * est.stderr + 1e-4


@pytest.mark.parametrize("pair", [p for p in all_pairs(4) if p.r < p.n], ids=str)
def test_moment_small_t(pair):
    est = moment_odet_pair(1e-3, pair, 100_000, RngStream(7, pair.n * 10 + pair.r))
    assert abs(est.mean - small_t_moment_limit(pair)) < 3 * est.stderr


def test_moment_small_t_square_slope():
    t = 1e-2
    est = moment_odet_pair(t, DimPair(2, 2), 200_000, RngStream(8))
    assert est.mean / t == pytest.approx(small_t_slope(DimPair(2, 2)), rel=0.1)


def test_dnr_tail_and_origin():
    tail = dnr(40.0, DimPair(3, 2), 100_000, RngStream(9))
    assert abs(tail.value) < 3 * tail.stderr + 1e-3
    near = dnr(1e-3, DimPair(1, 1), 200_000, RngStream(10))
    # E[|X||Y|] ~ t/2, so the scaled moment is O(sqrt t) and D tends to -2/pi
    assert abs(near.value + 2 / math.pi) < 3 * near.stderr + 0.05
    assert dnr(1e-7, DimPair(2, 2), 1000, RngStream(0)).unreliable
    finite = dnr(1e-2, DimPair(2, 1), 100_000, RngStream(11))
    assert math.isfinite(finite.value) and abs(finite.value) * math.sqrt(1e-2) < 1.0


def test_exchange_symmetry():
    X, Y = sample_xy(XYLaw(0.8, DimPair(3, 2)), RngStream(12), 10_000)
    a = np.mean(odet(X) * odet(Y))
    b = np.mean(odet(Y) * odet(X))
    assert a == b


def test_monotone_1d_moment():
    ts = [0.1, 0.5, 1, 2, 5]
    est = moment_curve(ts, DimPair(1, 1), 200_000, RngStream(13))
    for lo, hi in zip(est[:-1], est[1:]):
        assert hi.mean > lo.mean - 3 * math.hypot(lo.stderr, hi.stderr)


def test_1d_moment_overshoots_its_limit():
    # rises to a maximum near t = 5 and then decreases to 2/pi
    assert moment_closed_form_1d(5.0) > moment_closed_form_1d(10.0) > 2 / math.pi


def test_common_random_numbers_agree_with_independent():
    ts = [0.05, 1.0, 8.0]
    pair = DimPair(3, 2)
    crn = moment_curve(ts, pair, 100_000, RngStream(14))
    for k, t in enumerate(ts):
        ind = moment_odet_pair(t, pair, 100_000, RngStream(15, k))
        assert abs(crn[k].mean - ind.mean) < 3 * math.hypot(crn[k].stderr, ind.stderr)


def test_moment_estimates_are_reproducible():
    a = moment_odet_pair(1.0, DimPair(2, 1), 30_000, RngStream(16), threads=1)
    b = moment_odet_pair(1.0, DimPair(2, 1), 30_000, RngStream(16), threads=3)
    assert a == b
