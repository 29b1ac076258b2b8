"""Direct simulation of KSS zero sets: real-root counts on RP^1 and Crofton slices of curves in RP^2.

A univariate KSS polynomial is viewed as the trigonometric polynomial
    f(theta) = sum_k c_k cos^{d-k}(theta) sin^k(theta),  c_k = a_k sqrt(C(d, k)),
on theta in [-pi/2, pi/2), which parametrizes RP^1 (x = tan theta).  The batched
counter samples f on a uniform grid, recovers its Fourier coefficients by FFT and
certifies every grid interval with a bound on |f''|; only uncertain intervals are
bisected.  Intervals that stay uncertain at width 1e-10 fall back to companion
eigenvalues and are flagged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .kostlan import monomial_table
from .stats import Moments, RngStream, batch_sizes, merge_all, run_batches

IMAG_TOL = 1e-7
# an exact double root splits by ~sqrt(machine eps) in the eigensolver, so flag gaps at that scale
CLOSE_ROOT_TOL = 1e-7


class RootCount(NamedTuple):
    count: int
    ill_conditioned: bool


def count_real_roots(coeffs) -> RootCount:
    """Distinct real roots of sum_k coeffs[k] x^k (ascending order) via companion eigenvalues."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
    if c.size == 0:
        raise ValueError("zero polynomial")
    if c.size == 1:
        return RootCount(0, False)
    z = np.polynomial.polynomial.polyroots(c)
    real = np.abs(z.imag) <= IMAG_TOL * (1.0 + np.abs(z))
    xs = np.sort(z.real[real])
    close = bool(xs.size > 1 and np.min(np.diff(xs)) < CLOSE_ROOT_TOL * (1.0 + np.max(np.abs(xs))))
    # complex roots come in conjugate pairs, so an odd leftover means the threshold was ambiguous
    ambiguous = (z.size - xs.size) % 2 == 1
    return RootCount(int(xs.size), close or ambiguous)


def sturm_count(coeffs) -> int:
    """Exact number of distinct real roots by Sturm sequences (ascending coefficients).

    Floats are converted to rationals exactly; integral inputs use the much faster integer domain."""
    import sympy

    x = sympy.Symbol("x")
    c = np.asarray(coeffs, dtype=float)
    if np.all(c == np.round(c)):
        return int(sympy.Poly([int(a) for a in c[::-1]], x, domain=sympy.ZZ).count_roots())
    terms = [sympy.Rational(float(a)) * x**k for k, a in enumerate(c)]
    return int(sympy.Poly(sum(terms), x, domain=sympy.QQ).count_roots())


# ---------------------------------------------------------------- grid counter

def sqrt_binomials(d: int) -> np.ndarray:
    k = np.arange(d + 1)
    return np.exp(0.5 * (math.lgamma(d + 1) - np.array([math.lgamma(j + 1) + math.lgamma(d - j + 1) for j in k])))


def grid_points(d: int) -> np.ndarray:
    m = 4 * d
    return -0.5 * np.pi + np.pi * np.arange(m) / m


def trig_basis(d: int) -> np.ndarray:
    """(d+1, 4d) matrix of sqrt(C(d,k)) cos^{d-k} sin^k on the grid; rows of a @ B are unit-variance."""
    th = grid_points(d)
    c, s = np.cos(th), np.sin(th)
    k = np.arange(d + 1)[:, None]
    with np.errstate(divide="ignore"):
        lc = np.log(np.abs(c))
    return sqrt_binomials(d)[:, None] * np.exp((d - k) * lc[None, :]) * s[None, :] ** k


def _certified(f0, f1, g0, g1, K2, h):
    """(sign change, interval resolved) from endpoint values/derivatives and |f''| <= K2."""
    change = (f0 >= 0) != (f1 >= 0)
    mono = (np.abs(g0) + np.abs(g1)) > K2 * h
    slack = K2 * h * h / 8
    free = ((np.abs(f0) - 0.5 * np.abs(g0) * h - slack) > 0) & ((np.abs(f1) - 0.5 * np.abs(g1) * h - slack) > 0)
    return change, mono | (free & ~change)


def _fourier_eval(C, th):
    """f and f' from one-sided coefficients C (m, d+1) at angles th (m,)."""
    k = np.arange(C.shape[1])
    E = np.exp(1j * np.outer(th + 0.5 * np.pi, k[1:]))
    f = C[:, 0].real + 2.0 * np.real(np.sum(C[:, 1:] * E, axis=1))
    g = 2.0 * np.real(np.sum(1j * k[1:] * C[:, 1:] * E, axis=1))
    return f, g


class GridCount(NamedTuple):
    counts: np.ndarray
    fallback: np.ndarray  # samples that needed companion eigenvalues


def count_from_grid(vals: np.ndarray, d: int, coeffs_of=None, max_depth: int = 40) -> GridCount:
    """Zeros on RP^1 of trig polynomials of degree d given their values on ``grid_points(d)``.

    ``coeffs_of(i)`` returns ascending coefficients c_k of sample i for the fallback path."""
    vals = np.atleast_2d(np.asarray(vals, dtype=float))
    N, M = vals.shape
    if M != 4 * d:
        raise ValueError(f"expected {4 * d} grid values, got {M}")
    sgn = -1.0 if d % 2 else 1.0
    full = np.concatenate([vals, sgn * vals], axis=1)
    C = np.fft.rfft(full, axis=1)[:, :d + 1] / (2 * M)
    k = np.arange(d + 1)
    der = np.fft.irfft(1j * k * C * (2 * M), n=2 * M, axis=1)[:, :M]
    K2 = 2.0 * np.sum(k * k * np.abs(C), axis=1) * 1.01
    h = np.pi / M
    th = grid_points(d)
    f0, g0 = vals, der
    f1 = np.concatenate([vals[:, 1:], sgn * vals[:, :1]], axis=1)
    g1 = np.concatenate([der[:, 1:], sgn * der[:, :1]], axis=1)
    change, ok = _certified(f0, f1, g0, g1, K2[:, None], h)
    counts = np.where(ok, change, False).sum(axis=1)
    si, ii = np.nonzero(~ok)
    a, fa, fb, ga, gb = th[ii], f0[si, ii], f1[si, ii], g0[si, ii], g1[si, ii]
    width = h
    depth = 0
    while si.size and depth < max_depth:
        depth += 1
        width *= 0.5
        mid = a + width
        fm, gm = _fourier_eval(C[si], mid)
        S = np.concatenate([si, si])
        A = np.concatenate([a, mid])
        F0, F1 = np.concatenate([fa, fm]), np.concatenate([fm, fb])
        G0, G1 = np.concatenate([ga, gm]), np.concatenate([gm, gb])
        ch, good = _certified(F0, F1, G0, G1, K2[S], width)
        np.add.at(counts, S[good], ch[good].astype(int))
        keep = ~good
        si, a, fa, fb, ga, gb = S[keep], A[keep], F0[keep], F1[keep], G0[keep], G1[keep]
    bad = np.unique(si)
    for i in bad:
        if coeffs_of is None:
            raise RuntimeError("unresolved root interval and no coefficients for the fallback")
        counts[i] = count_real_roots(coeffs_of(i)).count
    return GridCount(counts.astype(int), bad)


def count_kss_roots(a: np.ndarray, d: int, basis: np.ndarray | None = None) -> GridCount:
    """Real-root counts for rows of standard Gaussian coefficients a (N, d+1)."""
    a = np.atleast_2d(a)
    B = trig_basis(d) if basis is None else basis
    w = sqrt_binomials(d)
    return count_from_grid(a @ B, d, coeffs_of=lambda i: a[i] * w)


def check_counts(counts: np.ndarray, d: int) -> None:
    counts = np.asarray(counts)
    if np.any(counts < 0) or np.any(counts > d):
        raise AssertionError(f"root count outside [0, {d}]")
    if np.any(counts % 2 != d % 2):
        raise AssertionError("root count parity differs from the degree")


# ---------------------------------------------------------------- statistics

@dataclass(frozen=True)
class ZeroStats:
    d: int
    samples: int
    mean: float
    var: float
    mean_ci: float
    var_ci: float
    seed: int
    fallbacks: int = 0

    @property
    def var_over_sqrt_d(self) -> float:
        return self.var / math.sqrt(self.d)

    @property
    def mean_stderr(self) -> float:
        return math.sqrt(self.var / self.samples)


ZERO_COLUMNS = ("d", "samples", "mean", "mean_ci", "var", "var_ci", "var_over_sqrt_d", "seed")


def zero_row(z: ZeroStats) -> list:
    return [z.d, z.samples, z.mean, z.mean_ci, z.var, z.var_ci, z.var_over_sqrt_d, z.seed]


def _stats(d, m: Moments, seed, fallbacks) -> ZeroStats:
    return ZeroStats(d, int(m.n), m.mean, m.var, m.mean_ci(), m.var_ci(), int(seed), int(fallbacks))


def empirical_root_stats(d: int, samples: int, rng: RngStream, batch: int = 2000,
                         threads: int = 1, histogram: bool = False):
    """Mean and variance of the number of real roots of degree-d KSS polynomials.

    With ``histogram=True`` also returns counts per root number (array of length d+1)."""
    if d < 1:
        raise ValueError("degree must be >= 1")
    B = trig_basis(d)

    def work(i, size):
        a = rng.child(i).generator().standard_normal((size, d + 1))
        res = count_kss_roots(a, d, B)
        check_counts(res.counts, d)
        return (Moments.from_array(res.counts.astype(float)), res.fallback.size,
                np.bincount(res.counts, minlength=d + 1))

    parts = run_batches(work, batch_sizes(samples, batch), threads)
    m = merge_all([p[0] for p in parts])
    st = _stats(d, m, rng.seed, sum(p[1] for p in parts))
    if histogram:
        return st, np.sum([p[2] for p in parts], axis=0)
    return st


# ---------------------------------------------------------------- Crofton slices

def monomials(pts: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    """x^alpha for points (..., n+1) and exponents (K, n+1), via per-coordinate power tables."""
    d = int(exponents.max(initial=0))
    powers = pts[..., None] ** np.arange(d + 1)  # (..., n+1, d+1)
    out = powers[..., 0, exponents[:, 0]]
    for i in range(1, exponents.shape[1]):
        out = out * powers[..., i, exponents[:, i]]
    return out


def random_plane(gen: np.random.Generator, n: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal (u, v) spanning a uniformly random 2-plane of R^{n+1}."""
    q, rr = np.linalg.qr(gen.standard_normal((n + 1, 2)))
    q = q * np.sign(np.diag(rr))
    return q[:, 0], q[:, 1]


def slice_values(coeffs: np.ndarray, d: int, u, v, exponents=None, log_weights=None) -> np.ndarray:
    """Normalized values (without sqrt K) of a homogeneous KSS polynomial along cos(theta) u + sin(theta) v."""
    if exponents is None:
        exponents, log_weights = monomial_table(len(u) - 1, d)
    th = grid_points(d)
    pts = np.cos(th)[:, None] * u + np.sin(th)[:, None] * v
    return monomials(pts, exponents) @ (coeffs * np.exp(log_weights))


def restricted_coefficients(coeffs: np.ndarray, d: int, u, v) -> np.ndarray:
    """Coefficients b_k with slice = sum_k b_k sqrt(C(d,k)) cos^{d-k} sin^k; KSS-distributed if the input is."""
    vals = slice_values(coeffs, d, u, v)
    return np.linalg.lstsq(trig_basis(d).T, vals, rcond=None)[0]


def crofton_length_stats(d: int, samples: int, slices_per_sample: int, rng: RngStream,
                         batch: int = 50, threads: int = 1) -> ZeroStats:
    """Length of a degree-d KSS curve in RP^2 estimated as pi times the mean slice count."""
    n = 2
    expo, logw = monomial_table(n, d)
    B = trig_basis(d)
    th = grid_points(d)
    c, s = np.cos(th), np.sin(th)

    def work(i, size):
        gen = rng.child(i).generator()
        est = np.empty(size)
        fb = 0
        for j in range(size):
            coeffs = gen.standard_normal(expo.shape[0]) * np.exp(logw)
            planes = [random_plane(gen, n) for _ in range(slices_per_sample)]
            pts = np.stack([c[:, None] * u + s[:, None] * v for u, v in planes])  # (S, M, 3)
            vals = monomials(pts, expo) @ coeffs
            coef_of = lambda k: np.linalg.lstsq(B.T, vals[k], rcond=None)[0] * sqrt_binomials(d)
            res = count_from_grid(vals, d, coeffs_of=coef_of)
            check_counts(res.counts, d)
            fb += res.fallback.size
            est[j] = math.pi * res.counts.mean()
        return Moments.from_array(est), fb

    parts = run_batches(work, batch_sizes(samples, batch), threads)
    m = merge_all([p[0] for p in parts])
    return _stats(d, m, rng.seed, sum(p[1] for p in parts))
