"""Kostlan-Shub-Smale (KSS) random polynomials: sampling, kernel jets, second chaos, Kac-Rice density.

Chart conventions: a point of RP^n is written [1 : z_1 : ... : z_n].  The normalized
field is t_d(z) = s(1, z) (1 + |z|^2)^{-d/2} / sqrt(K) with K = (d+n)!/(pi^n d!), so that
t_d has unit variance and correlation xi_d.  Its derivative L_d is taken in an
orthonormal frame of the Fubini-Study metric and divided by sqrt(d).  At a chart
point with |z|^2 = t, the frame is (1 + t) d/dx_1 along z and sqrt(1 + t) d/dx_j across it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .gaussian import condition_on_zero, expected_odet_standard, odet
from .geometry import DimPair, log_multinomial, multi_indices, n_monomials, sphere_volume
from .constants import PILOT_SAMPLES, control_variates, cv_coefficients
from .jacobian import PairedColumnLaw, draw_stats, odet_pair_from_stats
from .stats import Moments, RngStream, batch_sizes, merge_all, run_batches


def log_kss_norm(d: int, n: int) -> float:
    """log of (d+n)!/(pi^n d!)."""
    return math.lgamma(d + n + 1) - math.lgamma(d + 1) - n * math.log(math.pi)


# ---------------------------------------------------------------- sampling

@dataclass(frozen=True)
class KostlanSample:
    """r independent KSS polynomials of degree d in n+1 homogeneous variables."""

    n: int
    d: int
    r: int
    coeffs: np.ndarray  # (r, n_monomials), i.i.d. standard Gaussian
    exponents: np.ndarray = field(repr=False)  # (n_monomials, n+1)
    log_weights: np.ndarray = field(repr=False)  # 1/2 log multinomial(d, alpha)

    @property
    def log_norm(self) -> float:
        return 0.5 * log_kss_norm(self.d, self.n)

    def weighted_coeffs(self) -> np.ndarray:
        """a_alpha sqrt(multinomial), without the global sqrt(K)."""
        return self.coeffs * np.exp(self.log_weights)

    def evaluate(self, x, normalized: bool = True) -> np.ndarray:
        """Values at homogeneous points x (..., n+1); shape (..., r).

        ``normalized`` drops the global factor sqrt(K)."""
        x = np.asarray(x, dtype=float)
        mon = np.prod(x[..., None, :] ** self.exponents, axis=-1)
        out = mon @ self.weighted_coeffs().T
        return out if normalized else out * math.exp(self.log_norm)

    def evaluate_chart(self, z) -> np.ndarray:
        """s(1, z) (1 + |z|^2)^{-d/2} including sqrt(K): variance K at every chart point."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        x = np.concatenate([np.ones(z.shape[:-1] + (1,)), z], axis=-1)
        scale = np.exp(self.log_norm - 0.5 * self.d * np.log1p(np.sum(z * z, axis=-1)))
        return self.evaluate(x) * scale[..., None]


def monomial_table(n: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    expo = np.array(list(multi_indices(d, n + 1)), dtype=int)
    logw = np.array([0.5 * log_multinomial(d, a) for a in expo])
    return expo, logw


def sample_kostlan(n: int, d: int, r: int, rng) -> KostlanSample:
    DimPair(n, r)
    if d < 1:
        raise ValueError(f"degree must be >= 1, got {d}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    expo, logw = monomial_table(n, d)
    coeffs = gen.standard_normal((r, n_monomials(d, n)))
    return KostlanSample(n, d, r, coeffs, expo, logw)


# ---------------------------------------------------------------- kernel and jets

def xi_d(w, z, d: int) -> float:
    """((1 + <w,z>) / (sqrt(1+|w|^2) sqrt(1+|z|^2)))^d."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    base = (1.0 + w @ z) / math.sqrt((1.0 + w @ w) * (1.0 + z @ z))
    if base > 0:
        return math.exp(d * math.log(base))
    return float(base**d)


def xi_d_jet(w, z, d: int):
    """(d/dx_i xi_d, d/dy_j xi_d, d^2/dx_i dy_j xi_d) at (w, z)."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    xi = xi_d(w, z, d)
    p = 1.0 + w @ z
    nw = 1.0 + w @ w
    nz = 1.0 + z @ z
    grad_x = d * xi * (z / p - w / nw)
    grad_y = d * xi * (w / p - z / nz)
    hess = (d * np.eye(w.size) / p
            - d * d * np.outer(w, w) / (p * nw)
            - d * d * np.outer(z, z) / (p * nz)
            + d * d * np.outer(w, z) / (nw * nz)
            + (d * d - d) * np.outer(z, w) / (p * p))
    return grad_x, grad_y, xi * hess


def _e_d(t: float, d: float, power: float = -0.5) -> float:
    """(1 + t)^{power * d} in log space."""
    return math.exp(power * d * math.log1p(t))


@dataclass(frozen=True)
class JetCovarianceBlocks:
    """2x2 blocks of the covariance of (t(0), t(z), L_1(0), L_1(z), ..., L_n(0), L_n(z))."""

    t: float
    d: int
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def assembled(self, n: int) -> np.ndarray:
        M = np.zeros((2 * n + 2, 2 * n + 2))
        M[:2, :2] = self.A
        M[:2, 2:4] = self.B.T
        M[2:4, :2] = self.B
        M[2:4, 2:4] = self.D
        for j in range(1, n):
            M[2 + 2 * j:4 + 2 * j, 2 + 2 * j:4 + 2 * j] = self.C
        return M


def jet_covariance_blocks(t: float, d: int) -> JetCovarianceBlocks:
    if t < 0 or d < 1:
        raise ValueError("need t >= 0 and d >= 1")
    e = _e_d(t, d)
    b = math.sqrt(d * t) * e
    c = math.exp(0.5 * (1 - d) * math.log1p(t))
    dd = (1.0 + t - d * t) * e
    return JetCovarianceBlocks(
        float(t), int(d),
        A=np.array([[1.0, e], [e, 1.0]]),
        B=np.array([[0.0, b], [-b, 0.0]]),
        C=np.array([[1.0, c], [c, 1.0]]),
        D=np.array([[1.0, dd], [dd, 1.0]]),
    )


def jet_covariance_from_kernel(t: float, d: int, n: int) -> np.ndarray:
    """Same matrix rebuilt from xi_d and its jets with z = (sqrt t, 0, ..., 0)."""
    z = np.zeros(n)
    z[0] = math.sqrt(t)
    pts = [np.zeros(n), z]
    # orthonormal-frame scalings divided by sqrt(d)
    frame = [np.ones(n), np.array([1.0 + t] + [math.sqrt(1.0 + t)] * (n - 1))]
    frame = [f / math.sqrt(d) for f in frame]
    idx_val = [0, 1]
    idx_der = lambda a, j: 2 + 2 * j + a
    M = np.zeros((2 * n + 2, 2 * n + 2))
    for a in range(2):
        for b in range(2):
            gx, gy, h = xi_d_jet(pts[a], pts[b], d)
            M[idx_val[a], idx_val[b]] = xi_d(pts[a], pts[b], d)
            for j in range(n):
                M[idx_val[a], idx_der(b, j)] = gy[j] * frame[b][j]
                M[idx_der(a, j), idx_val[b]] = gx[j] * frame[a][j]
                for l in range(n):
                    M[idx_der(a, j), idx_der(b, l)] = h[j, l] * frame[a][j] * frame[b][l]
    return M


# ---------------------------------------------------------------- second chaos

def F_d(t, d: float, n: int):
    """(1 + t/d)^{-d} ((1 + t/d - t)^2 + (n - 1)(1 + t/d) - 2 n t + n^2)."""
    t = np.asarray(t, dtype=float)
    u = t / d
    poly = (1.0 + u - t) ** 2 + (n - 1) * (1.0 + u) - 2.0 * n * t + n * n
    out = np.exp(-d * np.log1p(u)) * poly
    return float(out) if out.ndim == 0 else out


def F_limit(t, n: int):
    t = np.asarray(t, dtype=float)
    out = (t * t - 2.0 * t * (n + 1) + n * (n + 1)) * np.exp(-t)
    return float(out) if out.ndim == 0 else out


def wick_second_chaos(t: float, d: int, pair: DimPair) -> float:
    """E[(|L(0)|^2 - n|t(0)|^2)(|L(z)|^2 - n|t(z)|^2)] at |z|^2 = t from the blocks.

    Uses E[X^2 Y^2] = 1 + 2 E[XY]^2 for unit-variance centered Gaussian pairs."""
    n, r = pair.n, pair.r
    M = jet_covariance_blocks(t, d).assembled(n)
    i0 = [2 + 2 * j for j in range(n)]
    iz = [3 + 2 * j for j in range(n)]
    ex = lambda a, b: 1.0 + 2.0 * M[a, b] ** 2
    total = sum(ex(a, b) for a in i0 for b in iz)
    total -= n * sum(ex(0, b) for b in iz)
    total -= n * sum(ex(a, 1) for a in i0)
    total += n * n * ex(0, 1)
    return r * total


class JnrResult(NamedTuple):
    J: float
    bare_integral: float
    abs_error: float


def _check_integrable(d: float, n: int) -> None:
    if d < 0.5 * n + 2:
        raise ValueError(f"degree {d} below the integrability threshold n/2 + 2 = {0.5 * n + 2}")


def jnr_integral(d: float, pair: DimPair, rel_tol: float = 1e-10) -> JnrResult:
    """d^{-n/2} r vol(S^{n-1}) int_0^inf F_d(t) t^{(n-2)/2} (1 + t/d)^{-(n+1)/2} dt."""
    n = pair.n
    _check_integrable(d, n)
    g = lambda t: F_d(t, d, n) * math.exp(-0.5 * (n + 1) * math.log1p(t / d))
    alpha = 0.5 * (n - 2)
    kw = dict(epsabs=0.0, epsrel=rel_tol, limit=400)
    # algebraic endpoint weight t^alpha on [0, 1]
    head, e1 = integrate.quad(g, 0.0, 1.0, weight="alg", wvar=(alpha, 0.0), **kw)
    mid, e2 = integrate.quad(lambda t: g(t) * t**alpha, 1.0, 60.0, **kw)
    tail, e3 = integrate.quad(lambda t: g(t) * t**alpha, 60.0, np.inf, **kw)
    bare = head + mid + tail
    pref = math.exp(-0.5 * n * math.log(d)) * pair.r * sphere_volume(n - 1)
    return JnrResult(pref * bare, bare, e1 + e2 + e3)


class SecondChaosVariance(NamedTuple):
    var2: float
    normalized: float
    limit: float
    J: float

    @property
    def rel_err(self) -> float:
        return abs(self.normalized / self.limit - 1.0)


def second_chaos_limit(pair: DimPair) -> float:
    """r (1 + 2/n) pi^{n/2} vol(S^{n-r})^2 / (16 vol S^n)."""
    n, r = pair.n, pair.r
    return r * (1 + 2 / n) * math.pi ** (0.5 * n) * sphere_volume(n - r) ** 2 / (16 * sphere_volume(n))


def second_chaos_variance(d: float, pair: DimPair) -> SecondChaosVariance:
    n, r = pair.n, pair.r
    J = jnr_integral(d, pair).J
    log_pref = r * math.log(d) + 2 * math.log(sphere_volume(n - r)) - math.log(8 * n * n * sphere_volume(n))
    var2 = math.exp(log_pref) * J
    normalized = math.exp(log_pref + (0.5 * n - r) * math.log(d)) * J
    return SecondChaosVariance(var2, normalized, second_chaos_limit(pair), J)


@dataclass(frozen=True)
class ChaosCoefficients:
    pair: DimPair
    B0: float
    B2: float


def chaos_coefficients(pair: DimPair) -> ChaosCoefficients:
    b0 = expected_odet_standard(pair)
    return ChaosCoefficients(pair, b0, b0 / (pair.n * math.sqrt(2.0)))


def hermite(k: int, x):
    """Probabilists' Hermite polynomial H_k by the three-term recurrence."""
    if k < 0:
        raise ValueError("k must be >= 0")
    x = np.asarray(x, dtype=float)
    h0, h1 = np.ones_like(x), x
    if k == 0:
        out = h0
    else:
        for j in range(1, k):
            h0, h1 = h1, x * h1 - j * h0
        out = h1
    return float(out) if out.ndim == 0 else out


def chaos_b2_mc(pair: DimPair, samples: int, rng: RngStream, batch: int = 50_000):
    """(1/sqrt 2) E[odet(G) H_2(G_11)] for a standard Gaussian r x n matrix G; returns (mean, stderr)."""

    def work(i, size):
        G = rng.child(i).generator().standard_normal((size, pair.r, pair.n))
        return Moments.from_array(odet(G) * hermite(2, G[:, 0, 0]) / math.sqrt(2.0))

    m = merge_all(run_batches(work, batch_sizes(samples, batch)))
    return m.mean, m.stderr


# ---------------------------------------------------------------- Kac-Rice density

def conditional_column_law(t: float, d: int, pair: DimPair) -> tuple[PairedColumnLaw, float]:
    """Law of the normalized derivatives given both values vanish, and det of the value block."""
    blocks = jet_covariance_blocks(t, d)
    n = pair.n
    lam = condition_on_zero(blocks.assembled(n), 2)
    first = lam[:2, :2]
    rest = lam[2:4, 2:4] if n > 1 else blocks.C
    det_a = float(-math.expm1(-d * math.log1p(t)))  # 1 - (1+t)^{-d}
    return PairedColumnLaw(pair, first, rest), det_a


def kac_rice_density_kss(t: float, d: int, pair: DimPair, samples: int, rng: RngStream,
                         batch: int = 20_000, threads: int = 1) -> tuple[float, float]:
    """d^r (E[odet odet | values 0] / det(value block)^{r/2} - B0^2) at separation |z|^2 = t."""
    if t < 1e-10:
        raise ValueError(f"value block is near-singular at t = {t}")
    from .jacobian import moment_odet_pair_law

    law, det_a = conditional_column_law(t, d, pair)
    mean, se, _ = moment_odet_pair_law(law, samples, rng, batch, threads)
    scale = d**pair.r * det_a ** (-0.5 * pair.r)
    b0sq = expected_odet_standard(pair) ** 2
    return scale * mean - d**pair.r * b0sq, scale * se


class KacRiceVariance(NamedTuple):
    variance: float
    stderr: float
    quad_delta: float
    integral: float
    samples: int


def _theta_panels(d: int) -> np.ndarray:
    """Panel edges in theta = arctan|z|, refined near 0 on the 1/sqrt(d) scale."""
    s = 1.0 / math.sqrt(d)
    edges = [0.0] + [s * 2.0**k for k in range(-3, 8) if s * 2.0**k < 0.5 * math.pi]
    return np.array(edges + [0.5 * math.pi])


def kac_rice_variance_1d(d: int, samples: int, rng: RngStream, nodes_per_panel: int = 12,
                         batch: int = 20_000, threads: int = 1) -> KacRiceVariance:
    """Variance of the number of real roots of a degree-d KSS polynomial.

    Var = int_0^{pi/2} D_d(tan^2 theta) d theta + sqrt(d), evaluated with common random
    numbers across the theta nodes and a node-doubling check."""
    pair = DimPair(1, 1)
    edges = _theta_panels(d)

    def rule(m):
        x, w = np.polynomial.legendre.leggauss(m)
        th, wt = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            th.append(0.5 * (b - a) * x + 0.5 * (a + b))
            wt.append(0.5 * (b - a) * w)
        return np.concatenate(th), np.concatenate(wt)

    thN, wN = rule(nodes_per_panel)
    th2, w2 = rule(2 * nodes_per_panel)
    th_all = np.concatenate([thN, th2])
    ts = np.tan(th_all) ** 2
    b0sq = expected_odet_standard(pair) ** 2
    roots, scales = [], []
    for t in ts:
        law, det_a = conditional_column_law(float(t), d, pair)
        roots.append(law.roots)
        scales.append(d * det_a**-0.5)
    scales = np.array(scales)
    wsN = np.concatenate([wN, np.zeros(th2.size)]) * scales
    ws2 = np.concatenate([np.zeros(thN.size), w2]) * scales
    coefs = cv_coefficients(roots, pair, rng, b0sq, PILOT_SAMPLES)
    betaN, beta2 = wsN @ coefs, ws2 @ coefs

    def work(i, size):
        stats = draw_stats(rng.child(i).generator(), pair, size)
        X = control_variates(stats, b0sq)
        accN = -(X @ betaN)
        acc2 = -(X @ beta2)
        for k, (S1, S) in enumerate(roots):
            ox, oy = odet_pair_from_stats(stats, S1, S)
            y = ox * oy
            if wsN[k]:
                accN += wsN[k] * y
            if ws2[k]:
                acc2 += ws2[k] * y
        return Moments.from_array(acc2), Moments.from_array(acc2 - accN)

    parts = run_batches(work, batch_sizes(samples, batch), threads)
    m2 = merge_all([p[0] for p in parts])
    md = merge_all([p[1] for p in parts])
    integral = m2.mean - d * b0sq * float(np.sum(w2))
    integral_N = m2.mean - md.mean - d * b0sq * float(np.sum(wN))
    return KacRiceVariance(integral + math.sqrt(d), m2.stderr, abs(integral - integral_N), integral, m2.n)
