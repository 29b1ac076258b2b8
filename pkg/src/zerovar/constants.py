"""Quadrature of I_{n,r} = 1/2 int_0^inf D_{n,r}(t) t^{(n-2)/2} dt and the leading variance constant.

Layout of the t axis:
  * (t_min, t_split]: t = s^2, Gauss-Legendre in s, which turns the t^{-1/2} end
    behaviour into a bounded integrand;
  * [t_split, t_max]: log-spaced Gauss-Legendre panels.
Every node reuses the same (A, B) draws, so per-sample integrals are formed first
and the standard error comes from their spread.  Three control variates with exactly
known means (odet(A) odet(B) and two first-order terms that are odd under B -> -B)
are regressed out node by node, with coefficients fitted on an independent pilot
draw so that the estimator stays unbiased.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gaussian import expected_odet_standard, odet_from_gram
from .geometry import DimPair, all_pairs, sphere_ratio, sphere_volume
from .jacobian import draw_stats, limit_column_roots, odet_pair_from_stats
from .stats import Moments, RngStream, batch_sizes, merge_all, run_batches


@dataclass(frozen=True)
class QuadratureConfig:
    t_min: float = 1e-6
    t_split: float = 1.0
    t_max: float = 60.0
    nodes_per_panel: int = 32
    panels: int = 8
    mc_samples_per_node: int = 200_000
    substitution: str = "sqrt_map"
    batch: int = 10_000

    def __post_init__(self):
        if not 0 < self.t_min < self.t_split < self.t_max:
            raise ValueError("need 0 < t_min < t_split < t_max")
        if self.nodes_per_panel < 4:
            raise ValueError("nodes_per_panel must be >= 4")
        if self.panels < 1:
            raise ValueError("need at least one upper panel")
        if self.substitution not in ("sqrt_map", "none"):
            raise ValueError(f"unknown substitution {self.substitution!r}")


@dataclass(frozen=True)
class InrResult:
    value: float
    error: float
    mc_stderr: float
    quad_delta: float
    tail: float
    lower_end: float
    converged: bool
    samples: int


@dataclass(frozen=True)
class ConstantReport:
    pair: DimPair
    I_nr: float
    I_err: float
    I_stderr: float
    quad_delta: float
    leading_constant: float
    leading_constant_err: float
    lower_bound: float
    positive: bool
    above_lower_bound: bool
    converged: bool
    samples: int
    seed: int


def _rule(a: float, b: float, m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def quadrature_nodes(cfg: QuadratureConfig, pair: DimPair, m: int):
    """(t, weight, upper): weights include 1/2 t^{(n-2)/2} dt; ``upper`` marks nodes above t_split."""
    n = pair.n
    ts, ws, up = [], [], []
    if cfg.substitution == "sqrt_map":
        s, w = _rule(math.sqrt(cfg.t_min), math.sqrt(cfg.t_split), m)
        t = s * s
        # 1/2 t^{(n-2)/2} dt = s^{n-1} ds
        ts.append(t)
        ws.append(w * s ** (n - 1))
    else:
        t, w = _rule(cfg.t_min, cfg.t_split, m)
        ts.append(t)
        ws.append(0.5 * w * t ** (0.5 * (n - 2)))
    up.append(np.zeros(m, dtype=bool))
    edges = np.geomspace(cfg.t_split, cfg.t_max, cfg.panels + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        t, w = _rule(a, b, m)
        ts.append(t)
        ws.append(0.5 * w * t ** (0.5 * (n - 2)))
        up.append(np.ones(m, dtype=bool))
    return np.concatenate(ts), np.concatenate(ws), np.concatenate(up)


def _node_roots(t: np.ndarray):
    roots = []
    for tk in t:
        a, b, g, d = limit_column_roots(float(tk))
        roots.append((np.array([[a, b], [b, a]]), np.array([[g, d], [d, g]])))
    return roots


def control_variates(stats: np.ndarray, C: float) -> np.ndarray:
    """Zero-mean regressors per sample, shape (N, 3).

    The first is odet(A) odet(B) - C.  The other two are the derivatives of
    odet(A + eps B) odet(B + eps A) at eps = 0, split into the first column and the
    remaining columns; they are odd under B -> -B and hence have mean zero.
    """
    GA = stats[:, 0] + stats[:, 3]
    GB = stats[:, 2] + stats[:, 5]
    r = GA.shape[-1]
    if r == 1:
        iA, iB = 1.0 / GA, 1.0 / GB
    else:
        iA, iB = np.linalg.inv(GA), np.linalg.inv(GB)
    base = odet_from_gram(GA) * odet_from_gram(GB)
    tr = lambda X, Y: np.einsum("nij,nji->n", X, Y)
    w1 = 0.5 * base * (tr(iA, stats[:, 1]) + tr(iB, stats[:, 1]))
    wr = 0.5 * base * (tr(iA, stats[:, 4]) + tr(iB, stats[:, 4]))
    return np.column_stack([base - C, w1, wr])


PILOT_STREAM = 999_983
PILOT_SAMPLES = 8_000


def cv_coefficients(roots, pair: DimPair, rng: RngStream, C: float, size: int) -> np.ndarray:
    """Per-node regression coefficients fitted on an independent pilot draw (keeps the estimator unbiased)."""
    stats = draw_stats(rng.child(PILOT_STREAM).generator(), pair, size)
    X = control_variates(stats, C)
    coefs = np.zeros((len(roots), 3))
    for k, (S1, S) in enumerate(roots):
        ox, oy = odet_pair_from_stats(stats, S1, S)
        # fit the residual against odet(A) odet(B) so coefficients vanish at large t
        y = ox * oy - X[:, 0]
        coefs[k] = np.linalg.lstsq(X, y - y.mean(), rcond=1e-10)[0]
        coefs[k, 0] += 1.0
    return coefs


def inr(pair: DimPair, cfg: QuadratureConfig | None = None, rng: RngStream | None = None,
        threads: int = 1) -> InrResult:
    cfg = cfg or QuadratureConfig()
    rng = rng or RngStream(0)
    m = cfg.nodes_per_panel
    tN, wN, _ = quadrature_nodes(cfg, pair, m)
    t2, w2, _ = quadrature_nodes(cfg, pair, 2 * m)
    t_all = np.concatenate([tN, t2])
    scale = (-np.expm1(-t_all)) ** (-0.5 * pair.r)
    roots = _node_roots(t_all)
    C = expected_odet_standard(pair) ** 2
    wsN = np.concatenate([wN, np.zeros(t2.size)]) * scale
    ws2 = np.concatenate([np.zeros(tN.size), w2]) * scale
    coefs = cv_coefficients(roots, pair, rng, C, min(PILOT_SAMPLES, max(1000, cfg.mc_samples_per_node)))
    betaN = wsN @ coefs
    beta2 = ws2 @ coefs
    k_first = tN.size  # smallest node of the refined rule

    def work(i, size):
        stats = draw_stats(rng.child(i).generator(), pair, size)
        X = control_variates(stats, C)
        accN = -(X @ betaN)
        acc2 = -(X @ beta2)
        first = None
        for k, (S1, S) in enumerate(roots):
            ox, oy = odet_pair_from_stats(stats, S1, S)
            y = ox * oy
            if wsN[k]:
                accN += wsN[k] * y
            if ws2[k]:
                acc2 += ws2[k] * y
            if k == k_first:
                first = y
        return Moments.from_array(acc2), Moments.from_array(acc2 - accN), Moments.from_array(first)

    parts = run_batches(work, batch_sizes(cfg.mc_samples_per_node, cfg.batch), threads)
    m2 = merge_all([p[0] for p in parts])
    mdiff = merge_all([p[1] for p in parts])
    mfirst = merge_all([p[2] for p in parts])
    value = m2.mean - C * float(np.sum(w2))
    value_N = (m2.mean - mdiff.mean) - C * float(np.sum(wN))
    quad_delta = abs(value - value_N)
    stderr = m2.stderr
    tail = 2.0 * C * cfg.t_max ** (0.5 * pair.n) * math.exp(-0.5 * cfg.t_max)
    # integrand at the smallest node times the width of the skipped interval
    t0 = t2[0]
    d0 = abs(mfirst.mean * scale[k_first] - C)
    if cfg.substitution == "sqrt_map":
        lower_end = d0 * math.sqrt(t0) ** (pair.n - 1) * math.sqrt(cfg.t_min)
    else:
        lower_end = 0.5 * d0 * t0 ** (0.5 * (pair.n - 2)) * cfg.t_min
    noise = 2.0 * stderr + tail + lower_end
    error = quad_delta + noise
    converged = quad_delta <= 3.0 * noise
    return InrResult(float(value), float(error), float(stderr), float(quad_delta), float(tail),
                     float(lower_end), bool(converged), int(m2.n))


def leading_constant(pair: DimPair, I_nr: float) -> float:
    """vol(S^{n-1})/(2 pi)^r I_{n,r}, plus 2/vol(S^n) when r = n."""
    c = sphere_volume(pair.n - 1) / (2 * math.pi) ** pair.r * I_nr
    if pair.r == pair.n:
        c += 2.0 / sphere_volume(pair.n)
    return c


def leading_constant_error(pair: DimPair, I_err: float) -> float:
    return sphere_volume(pair.n - 1) / (2 * math.pi) ** pair.r * I_err


def positivity_lower_bound(pair: DimPair) -> float:
    """(r/8)(1 + 2/n) pi^{n/2} (vol S^{n-r} / vol S^n)^2."""
    n, r = pair.n, pair.r
    return r / 8.0 * (1.0 + 2.0 / n) * math.pi ** (0.5 * n) * sphere_ratio(n, r) ** 2


def constant_report(pair: DimPair, cfg: QuadratureConfig, rng: RngStream, threads: int = 1) -> ConstantReport:
    res = inr(pair, cfg, rng, threads)
    c = leading_constant(pair, res.value)
    c_err = leading_constant_error(pair, res.error)
    lb = positivity_lower_bound(pair)
    return ConstantReport(
        pair=pair, I_nr=res.value, I_err=res.error, I_stderr=res.mc_stderr, quad_delta=res.quad_delta,
        leading_constant=c, leading_constant_err=c_err, lower_bound=lb,
        positive=bool(c - 2.0 * c_err > 0), above_lower_bound=bool(c >= lb - 3.0 * c_err),
        converged=res.converged, samples=res.samples, seed=int(rng.seed),
    )


def pair_stream(seed: int, pair: DimPair) -> RngStream:
    return RngStream(seed, 1000 * pair.n + pair.r)


def positivity_report(n_max: int, cfg: QuadratureConfig | None = None, seed: int = 0,
                      threads: int = 1) -> list[ConstantReport]:
    cfg = cfg or QuadratureConfig()
    return [constant_report(p, cfg, pair_stream(seed, p), threads) for p in all_pairs(n_max)]


REPORT_COLUMNS = ("n", "r", "I_nr", "I_err", "quad_delta", "mc_stderr", "leading_constant",
                  "leading_constant_err", "lower_bound", "positive", "above_lower_bound",
                  "converged", "samples", "seed")


def report_row(rep: ConstantReport) -> list:
    return [rep.pair.n, rep.pair.r, rep.I_nr, rep.I_err, rep.quad_delta, rep.I_stderr,
            rep.leading_constant, rep.leading_constant_err, rep.lower_bound, rep.positive,
            rep.above_lower_bound, rep.converged, rep.samples, rep.seed]
