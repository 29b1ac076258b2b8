"""Covariance algebra, Gaussian sampling and the Jacobian |det_perp A| = sqrt(det(A A^t))."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import DimPair, log_sphere_volume
from .stats import RngStream

SYM_TOL = 1e-12
CLAMP_TOL = 1e-10
NEG_TOL = 1e-8


class NotPSDError(ValueError):
    def __init__(self, min_eig: float):
        super().__init__(f"matrix is not positive semi-definite: min eigenvalue {min_eig:.3e}")
        self.min_eig = min_eig


class SingularBlockError(ValueError):
    def __init__(self, min_eig: float):
        super().__init__(f"conditioning block is singular: min scaled eigenvalue {min_eig:.3e}")
        self.min_eig = min_eig


def _symmetrize(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-9 * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class SymmetricMatrix:
    """Dense symmetric matrix, optionally checked to be PSD up to rounding."""

    entries: np.ndarray
    psd: bool = True

    def __post_init__(self):
        a = _symmetrize(self.entries)
        if self.psd and a.size:
            w = np.linalg.eigvalsh(a)
            if w[0] < -NEG_TOL * max(1.0, abs(w[-1])):
                raise NotPSDError(float(w[0]))
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def _eigh_clamped(cov: np.ndarray):
    w, v = np.linalg.eigh(cov)
    scale = max(1.0, abs(w[-1])) if w.size else 1.0
    if w.size and w[0] < -NEG_TOL * scale:
        raise NotPSDError(float(w[0]))
    w = np.where(w < CLAMP_TOL * scale, np.maximum(w, 0.0), w)
    return w, v


def psd_sqrt(cov) -> np.ndarray:
    """Symmetric PSD square root S with S @ S = cov."""
    cov = _symmetrize(cov)
    w, v = _eigh_clamped(cov)
    return (v * np.sqrt(w)) @ v.T


def psd_factor(cov) -> np.ndarray:
    """Any F with F F^t = cov: Cholesky when the pivots are safe, spectral root otherwise."""
    cov = _symmetrize(cov)
    if cov.size == 0:
        return cov.copy()
    try:
        L = np.linalg.cholesky(cov)
        if np.min(np.abs(np.diag(L))) > CLAMP_TOL:
            return L
    except np.linalg.LinAlgError:
        pass
    return psd_sqrt(cov)


def condition_on_zero(joint, split: int) -> np.ndarray:
    """Covariance of ``x[split:]`` given ``x[:split] = 0`` (Schur complement)."""
    joint = _symmetrize(joint)
    k = int(split)
    if not 0 < k < joint.shape[0]:
        raise ValueError(f"split must lie in 1..{joint.shape[0] - 1}, got {split}")
    theta = joint[:k, :k]
    cross = joint[:k, k:]
    # scale to unit diagonal so the singularity test is dimensionless
    dscale = np.sqrt(np.clip(np.diag(theta), 1e-300, None))
    scaled = theta / np.outer(dscale, dscale)
    w = np.linalg.eigvalsh(scaled)
    if w[0] <= 1e-12:
        raise SingularBlockError(float(w[0]))
    sol = np.linalg.solve(theta, cross)
    out = joint[k:, k:] - cross.T @ sol
    return 0.5 * (out + out.T)


@dataclass(frozen=True)
class GaussianLaw:
    """Centered Gaussian vector with covariance ``cov``; the factor is cached at construction."""

    cov: SymmetricMatrix
    sqrt_cov: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cov = self.cov if isinstance(self.cov, SymmetricMatrix) else SymmetricMatrix(self.cov)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "sqrt_cov", psd_factor(cov.entries))

    @property
    def dim(self) -> int:
        return self.cov.dim

    @property
    def mean(self) -> np.ndarray:
        return np.zeros(self.dim)


def sample_gaussian(law: GaussianLaw, rng, size: int | None = None) -> np.ndarray:
    """One draw (shape (dim,)) or ``size`` draws (shape (size, dim))."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    m = 1 if size is None else int(size)
    g = gen.standard_normal((m, law.dim))
    out = g @ law.sqrt_cov.T
    return out[0] if size is None else out


def odet(A) -> np.ndarray | float:
    """sqrt(det(A A^t)) as a product of singular values; accepts stacks of shape (..., r, n)."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    r, n = A.shape[-2:]
    if r > n:
        raise ValueError(f"odet needs r <= n, got a {r}x{n} matrix")
    if r == 1:
        out = np.linalg.norm(A[..., 0, :], axis=-1)
    else:
        out = np.prod(np.linalg.svd(A, compute_uv=False), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def odet_from_gram(G) -> np.ndarray:
    """sqrt(det G) for stacks of PSD Gram matrices G = A A^t (fast path used in the moment loops)."""
    G = np.asarray(G, dtype=float)
    r = G.shape[-1]
    if r == 1:
        det = G[..., 0, 0]
    elif r == 2:
        det = G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]
    else:
        det = np.linalg.det(G)
    return np.sqrt(np.maximum(det, 0.0))


def expected_odet_standard(pair: DimPair) -> float:
    """E[odet(G)] for an r x n matrix G of i.i.d. standard Gaussians."""
    n, r = pair.n, pair.r
    return math.exp(0.5 * r * math.log(2 * math.pi) + log_sphere_volume(n - r) - log_sphere_volume(n))
