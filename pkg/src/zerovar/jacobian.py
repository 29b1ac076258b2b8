"""Monte-Carlo moments E[odet X(t) odet Y(t)] for pairs of correlated Gaussian r x n matrices.

Entries (X_ij, Y_ij) are independent across (i, j).  Within an entry the pair has
covariance ``first`` for column 1 and ``rest`` for the other columns.  Writing each
pair as S @ (A_ij, B_ij) with S a 2x2 square root and A, B i.i.d. standard, the Gram
matrices X X^t and Y Y^t are linear combinations of six r x r statistics of (A, B).
The moment loops work on those statistics, so a t-grid costs O(r^2) per node and sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .gaussian import expected_odet_standard, odet_from_gram, psd_sqrt
from .geometry import DimPair
from .limit_model import lambda_tilde, u_values
from .stats import Moments, RngStream, batch_sizes, merge_all, run_batches

DEFAULT_BATCH = 20_000


@dataclass(frozen=True)
class PairedColumnLaw:
    """Law of (X, Y): per-entry 2x2 covariance ``first`` on column 1 and ``rest`` elsewhere."""

    pair: DimPair
    first: np.ndarray
    rest: np.ndarray

    @property
    def roots(self) -> tuple[np.ndarray, np.ndarray]:
        return psd_sqrt(self.first), psd_sqrt(self.rest)

    @property
    def lambda_hat(self) -> np.ndarray:
        """Full covariance of (X_{.1}, Y_{.1}, X_{.2}, Y_{.2}, ...)."""
        r = self.pair.r
        blocks = [np.kron(self.first, np.eye(r))] + [np.kron(self.rest, np.eye(r))] * (self.pair.n - 1)
        size = 2 * r * self.pair.n
        out = np.zeros((size, size))
        for j, b in enumerate(blocks):
            out[2 * r * j:2 * r * (j + 1), 2 * r * j:2 * r * (j + 1)] = b
        return out


def limit_column_roots(t: float) -> tuple[float, float, float, float]:
    """(alpha, beta, gamma, delta): entries of the symmetric roots of the two 2x2 covariances."""
    u1, u2 = u_values(t)
    su1, su2 = math.sqrt(max(u1, 0.0)), math.sqrt(max(u2, 0.0))
    e = math.exp(-0.5 * t)
    sp, sm = math.sqrt(1.0 + e), math.sqrt(-math.expm1(-0.5 * t))
    return 0.5 * (su2 + su1), 0.5 * (su2 - su1), 0.5 * (sp + sm), 0.5 * (sp - sm)


@dataclass(frozen=True)
class XYLaw:
    """Conditional derivative law of the limit field at separation |z|^2 = t."""

    t: float
    pair: DimPair

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"t must be positive, got {self.t}")

    def column_law(self) -> PairedColumnLaw:
        e = math.exp(-0.5 * self.t)
        return PairedColumnLaw(self.pair, lambda_tilde(self.t), np.array([[1.0, e], [e, 1.0]]))

    @property
    def lambda_hat(self) -> np.ndarray:
        return self.column_law().lambda_hat

    def roots(self) -> tuple[np.ndarray, np.ndarray]:
        a, b, g, d = limit_column_roots(self.t)
        return np.array([[a, b], [b, a]]), np.array([[g, d], [d, g]])


@dataclass(frozen=True)
class JacobianMomentEstimate:
    t: float
    mean: float
    stderr: float
    samples: int
    seed: int


class DnrEstimate(NamedTuple):
    value: float
    stderr: float
    unreliable: bool = False


def _gen(rng):
    return rng.generator() if isinstance(rng, RngStream) else rng


def _law_roots(law) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(law, XYLaw):
        return law.roots()
    return law.roots


def sample_xy(law, rng, size: int | None = None):
    """Draw (X, Y); shapes (r, n) or (size, r, n)."""
    pair = law.pair
    S1, S = _law_roots(law)
    m = 1 if size is None else int(size)
    g = _gen(rng)
    A = g.standard_normal((m, pair.r, pair.n))
    B = g.standard_normal((m, pair.r, pair.n))
    X, Y = _combine(A, B, S1, S)
    if size is None:
        return X[0], Y[0]
    return X, Y


def _combine(A, B, S1, S):
    X = np.empty_like(A)
    Y = np.empty_like(A)
    X[..., 0] = S1[0, 0] * A[..., 0] + S1[0, 1] * B[..., 0]
    Y[..., 0] = S1[1, 0] * A[..., 0] + S1[1, 1] * B[..., 0]
    X[..., 1:] = S[0, 0] * A[..., 1:] + S[0, 1] * B[..., 1:]
    Y[..., 1:] = S[1, 0] * A[..., 1:] + S[1, 1] * B[..., 1:]
    return X, Y


# ---------------------------------------------------------------- Gram statistics

def gram_statistics(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Six r x r statistics per sample, shape (N, 6, r, r)."""
    a, b = A[..., :1], B[..., :1]
    Ar, Br = A[..., 1:], B[..., 1:]
    tr = lambda M: np.swapaxes(M, -1, -2)
    ab = a @ tr(b)
    AB = Ar @ tr(Br)
    return np.stack([a @ tr(a), ab + tr(ab), b @ tr(b), Ar @ tr(Ar), AB + tr(AB), Br @ tr(Br)], axis=1)


def _gram_coeffs(S1: np.ndarray, S: np.ndarray, row: int) -> np.ndarray:
    p, q = S1[row]
    g, d = S[row]
    return np.array([p * p, p * q, q * q, g * g, g * d, d * d])


def odet_pair_from_stats(stats: np.ndarray, S1: np.ndarray, S: np.ndarray):
    """(odet X, odet Y) per sample for the root pair (S1, S)."""
    cx = _gram_coeffs(S1, S, 0)
    cy = _gram_coeffs(S1, S, 1)
    GX = np.tensordot(stats, cx, axes=([1], [0]))
    GY = np.tensordot(stats, cy, axes=([1], [0]))
    return odet_from_gram(GX), odet_from_gram(GY)


def draw_stats(gen: np.random.Generator, pair: DimPair, size: int) -> np.ndarray:
    A = gen.standard_normal((size, pair.r, pair.n))
    B = gen.standard_normal((size, pair.r, pair.n))
    return gram_statistics(A, B)


# ---------------------------------------------------------------- moments

def _seed_of(rng) -> int:
    return int(rng.seed) if isinstance(rng, RngStream) else -1


def moment_odet_pair_law(law, samples: int, rng: RngStream, batch: int = DEFAULT_BATCH,
                         threads: int = 1) -> tuple[float, float, int]:
    """Plain MC of E[odet X odet Y] for any paired-column law; returns (mean, stderr, samples)."""
    S1, S = _law_roots(law)
    pair = law.pair

    def work(i, size):
        gen = rng.child(i).generator() if isinstance(rng, RngStream) else rng
        ox, oy = odet_pair_from_stats(draw_stats(gen, pair, size), S1, S)
        return Moments.from_array(ox * oy)

    m = merge_all(run_batches(work, batch_sizes(samples, batch), threads))
    return m.mean, m.stderr, m.n


def moment_odet_pair(t: float, pair: DimPair, samples: int, rng: RngStream,
                     batch: int = DEFAULT_BATCH, threads: int = 1) -> JacobianMomentEstimate:
    mean, se, n = moment_odet_pair_law(XYLaw(t, pair), samples, rng, batch, threads)
    return JacobianMomentEstimate(float(t), float(mean), float(se), int(n), _seed_of(rng))


def moment_curve(ts: Sequence[float], pair: DimPair, samples: int, rng: RngStream,
                 batch: int = DEFAULT_BATCH, threads: int = 1) -> list[JacobianMomentEstimate]:
    """Common-random-numbers estimates: the same (A, B) draws are reused at every t."""
    ts = [float(t) for t in ts]
    roots = [XYLaw(t, pair).roots() for t in ts]

    def work(i, size):
        gen = rng.child(i).generator() if isinstance(rng, RngStream) else rng
        stats = draw_stats(gen, pair, size)
        out = []
        for S1, S in roots:
            ox, oy = odet_pair_from_stats(stats, S1, S)
            out.append(Moments.from_array(ox * oy))
        return out

    parts = run_batches(work, batch_sizes(samples, batch), threads)
    res = []
    for k, t in enumerate(ts):
        m = merge_all([p[k] for p in parts])
        res.append(JacobianMomentEstimate(t, m.mean, m.stderr, m.n, _seed_of(rng)))
    return res


def decorrelated_moment(pair: DimPair) -> float:
    """Limit of E[odet X odet Y] as t -> infinity: (E odet of a standard matrix)^2."""
    return expected_odet_standard(pair) ** 2


def small_t_moment_limit(pair: DimPair) -> float:
    """Limit as t -> 0 for r < n: (n-1)!/(n-r-1)!."""
    if pair.r >= pair.n:
        raise ValueError("the finite small-t limit exists only for r < n")
    return math.factorial(pair.n - 1) / math.factorial(pair.n - pair.r - 1)


def small_t_slope(pair: DimPair) -> float:
    """For r = n the moment vanishes like (n!/2) t."""
    if pair.r != pair.n:
        raise ValueError("the linear small-t regime applies only for r = n")
    return math.factorial(pair.n) / 2.0


def dnr(t: float, pair: DimPair, samples: int, rng: RngStream, batch: int = DEFAULT_BATCH,
        threads: int = 1) -> DnrEstimate:
    """E[odet X odet Y]/(1 - e^{-t})^{r/2} minus its decorrelated limit."""
    est = moment_odet_pair(t, pair, samples, rng, batch, threads)
    scale = (-math.expm1(-t)) ** (-0.5 * pair.r)
    unreliable = t < 1e-6 and pair.r == pair.n
    return DnrEstimate(est.mean * scale - decorrelated_moment(pair), est.stderr * scale, unreliable)


def bivariate_abs_product(var: float, rho: float) -> float:
    """E|U V| for centered (U, V) with equal variances ``var`` and correlation ``rho``."""
    rho = min(1.0, max(-1.0, rho))
    return 2.0 * var / math.pi * (math.sqrt(1.0 - rho * rho) + rho * math.asin(rho))


def moment_closed_form_1d(t: float) -> float:
    """Exact E[|X||Y|] when n = r = 1."""
    lt = lambda_tilde(t)
    return bivariate_abs_product(lt[0, 0], lt[0, 1] / lt[0, 0])
