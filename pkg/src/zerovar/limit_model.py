"""Covariance algebra of the Gaussian field on R^n with correlation exp(-|w - z|^2 / 2).

Every z-dependent matrix is returned in an adapted orthonormal frame whose first
axis points along z.  For jets the ordering is

    (s(0), s(z), d_1 s(0), d_1 s(z), ..., d_n s(0), d_n s(z))

and the derivative-only matrices drop the two value coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import condition_on_zero

Q_ROT = np.array([[1.0, -1.0], [1.0, 1.0]]) / np.sqrt(2.0)

_SERIES_CUT = 0.5


# ---------------------------------------------------------------- kernel

def bf_kernel(w, z) -> float:
    w = np.atleast_1d(np.asarray(w, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    return float(np.exp(-0.5 * np.sum((w - z) ** 2)))


def bf_jet_derivatives(w, z):
    """(d/dx_i xi, d/dy_j xi, d^2/dx_i dy_j xi) at (x, y) = (w, z)."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    diff = w - z
    xi = np.exp(-0.5 * diff @ diff)
    grad_x = -diff * xi
    grad_y = diff * xi
    hess_xy = (np.eye(diff.size) - np.outer(diff, diff)) * xi
    return grad_x, grad_y, hess_xy


# ---------------------------------------------------------------- scalar families

def _sinh_minus_id(h):
    """sinh(h) - h without cancellation near 0."""
    h = np.asarray(h, dtype=float)
    h2 = h * h
    # Taylor tail h^3/3! + h^5/5! + ... up to h^23
    series = np.zeros_like(h)
    term = h * h2 / 6.0
    for k in range(1, 12):
        series = series + term
        term = term * h2 / ((2 * k + 2) * (2 * k + 3))
    direct = np.sinh(np.minimum(h, 700.0)) - h
    return np.where(h < _SERIES_CUT, series, direct)


def _asinh_minus_id(h):
    """asinh(h) - h without cancellation near 0."""
    h = np.asarray(h, dtype=float)
    series = np.zeros_like(h)
    coef = 1.0
    for k in range(1, 14):
        coef *= -(2 * k - 1) / (2 * k)
        series = series + coef * h ** (2 * k + 1) / (2 * k + 1)
    direct = np.arcsinh(h) - h
    return np.where(h < 0.1, series, direct)


def _g_pm(t):
    """g_plus, g_minus = 2 e^{-h} (sinh h +- h), h = t/2, finite for every t >= 0."""
    h = 0.5 * np.asarray(t, dtype=float)
    eh = np.exp(-h)
    one_minus_e2h = -np.expm1(-2.0 * h)
    g_plus = one_minus_e2h + 2.0 * h * eh
    g_minus_direct = one_minus_e2h - 2.0 * h * eh
    g_minus = np.where(h < _SERIES_CUT, 2.0 * eh * _sinh_minus_id(h), g_minus_direct)
    return g_plus, g_minus


def det_f(t):
    """1 - (t^2 + 2) e^{-t} + e^{-2t}, evaluated as g_plus * g_minus."""
    gp, gm = _g_pm(t)
    out = gp * gm
    return float(out) if np.ndim(out) == 0 else out


def u_values(t):
    """Eigenvalues (u1, u2) of the conditional derivative covariance along z."""
    t = np.asarray(t, dtype=float)
    h = 0.5 * t
    gp, gm = _g_pm(t)
    eh = np.exp(-h)
    with np.errstate(invalid="ignore", divide="ignore"):
        u1 = gp / (1.0 + eh)
        u2 = np.where(h > 0, gm / -np.expm1(-np.where(h > 0, h, 1.0)), 0.0)
    if np.ndim(u1) == 0:
        return float(u1), float(u2)
    return u1, u2


@dataclass(frozen=True)
class ScalarFamilies:
    t: float
    a: float
    b_plus: float
    b_minus: float
    v1: float
    v2: float
    v3: float
    v4: float
    u1: float
    u2: float

    @property
    def v(self) -> np.ndarray:
        return np.array([self.v1, self.v2, self.v3, self.v4])


def scalar_families(t: float) -> ScalarFamilies:
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    t = float(t)
    h = 0.5 * t
    R = np.hypot(1.0, h)
    a = (1.0 - h) / R
    one_minus_a = (h * h / (R + 1.0) + h) / R
    one_plus_a = (1.0 + 1.0 / (R + h)) / R
    ash = float(_asinh_minus_id(h))  # asinh(h) - h
    lg = np.log(R + h)  # asinh(h)
    v1 = 1.0 + np.exp(-h - lg)
    v2 = -np.expm1(ash)
    v3 = -np.expm1(-h - lg)
    v4 = 1.0 + np.exp(ash)
    u1, u2 = u_values(t)
    return ScalarFamilies(t, float(a), float(np.sqrt(one_plus_a)), float(np.sqrt(one_minus_a)),
                          float(v1), float(v2), float(v3), float(v4), u1, u2)


# ---------------------------------------------------------------- reduced matrices

def theta_core(t: float) -> np.ndarray:
    e = np.exp(-0.5 * t)
    return np.array([[1.0, e], [e, 1.0]])


def theta_matrix(t: float, r: int) -> np.ndarray:
    return np.kron(theta_core(t), np.eye(r))


def omega_tilde(t: float) -> np.ndarray:
    e = np.exp(-0.5 * t)
    s = np.sqrt(t) * e
    return np.array([
        [1.0, e, 0.0, -s],
        [e, 1.0, s, 0.0],
        [0.0, s, 1.0, (1.0 - t) * e],
        [-s, 0.0, (1.0 - t) * e, 1.0],
    ])


def lambda_tilde(t: float) -> np.ndarray:
    if t == 0:
        return np.zeros((2, 2))
    u1, u2 = u_values(t)
    p, q = 0.5 * (u1 + u2), 0.5 * (u2 - u1)
    return np.array([[p, q], [q, p]])


def lambda_tilde_raw(t: float) -> np.ndarray:
    """Direct transcription of the entries; loses accuracy for small t."""
    em = -np.expm1(-t)
    p = 1.0 - t * np.exp(-t) / em
    q = np.exp(-0.5 * t) * (1.0 - t / em)
    return np.array([[p, q], [q, p]])


def p_matrix(t: float) -> np.ndarray:
    sf = scalar_families(t)
    bp, bm = sf.b_plus, sf.b_minus
    return 0.5 * np.array([
        [bm, -bm, -bp, -bp],
        [bp, -bp, bm, bm],
        [bm, bm, -bp, bp],
        [bp, bp, bm, -bm],
    ])


def diagonalize_omega_tilde(t: float):
    sf = scalar_families(t)
    return p_matrix(t), (sf.v1, sf.v2, sf.v3, sf.v4)


def diagonalize_lambda_tilde(t: float):
    return u_values(t)


# ---------------------------------------------------------------- full jet covariances

def adapted_frame(z) -> np.ndarray:
    """Orthogonal matrix whose first column is z/|z| (identity when z = 0)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    n = z.size
    nz = np.linalg.norm(z)
    if nz == 0.0:
        return np.eye(n)
    zh = z / nz
    v = np.zeros(n)
    v[0] = 1.0
    v = v - zh
    vv = v @ v
    if vv < 1e-30:
        return np.eye(n)
    return np.eye(n) - 2.0 * np.outer(v, v) / vv


def _jet_transform(O: np.ndarray) -> np.ndarray:
    """Map (s0, sz, grad s(0), grad s(z)) to the adapted interleaved ordering."""
    n = O.shape[0]
    T = np.zeros((2 + 2 * n, 2 + 2 * n))
    T[0, 0] = T[1, 1] = 1.0
    for k in range(n):
        T[2 + 2 * k, 2:2 + n] = O[:, k]
        T[3 + 2 * k, 2 + n:] = O[:, k]
    return T


def omega_prime_canonical(z) -> np.ndarray:
    """Jet covariance of (s(0), s(z), grad s(0), grad s(z)) assembled from the kernel derivatives."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    n = z.size
    pts = [np.zeros(n), z]
    M = np.zeros((2 + 2 * n, 2 + 2 * n))
    for a, wa in enumerate(pts):
        for b, wb in enumerate(pts):
            gx, gy, hxy = bf_jet_derivatives(wa, wb)
            M[a, b] = bf_kernel(wa, wb)
            M[a, 2 + b * n:2 + (b + 1) * n] = gy
            M[2 + a * n:2 + (a + 1) * n, b] = gx
            M[2 + a * n:2 + (a + 1) * n, 2 + b * n:2 + (b + 1) * n] = hxy
    return M


def lambda_prime_canonical(z) -> np.ndarray:
    """Closed-form conditional covariance of (grad s(0), grad s(z)) given s(0) = s(z) = 0."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    n = z.size
    t = float(z @ z)
    if t == 0.0:
        raise ValueError("conditional covariance needs z != 0")
    em = -np.expm1(-t)
    zz = np.outer(z, z)
    diag = np.eye(n) - np.exp(-t) / em * zz
    off = np.exp(-0.5 * t) * (np.eye(n) - zz / em)
    return np.block([[diag, off], [off, diag]])


@dataclass(frozen=True)
class LimitCovariances:
    z_norm_sq: float
    theta: np.ndarray
    omega_prime: np.ndarray
    lambda_prime: np.ndarray
    omega_tilde: np.ndarray
    lambda_tilde: np.ndarray
    P: np.ndarray
    Q: np.ndarray

    def omega(self, r: int) -> np.ndarray:
        return np.kron(self.omega_prime, np.eye(r))

    def lambda_(self, r: int) -> np.ndarray:
        return np.kron(self.lambda_prime, np.eye(r))


def build_limit_covariances(z, r: int = 1) -> LimitCovariances:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    n = z.size
    t = float(z @ z)
    O = adapted_frame(z)
    T = _jet_transform(O)
    om = T @ omega_prime_canonical(z) @ T.T
    if t > 0:
        lam = T[2:, 2:] @ lambda_prime_canonical(z) @ T[2:, 2:].T
    else:
        rest = np.kron(np.eye(n - 1), np.ones((2, 2)))
        lam = np.zeros((2 * n, 2 * n))
        lam[2:, 2:] = rest
    return LimitCovariances(
        z_norm_sq=t,
        theta=theta_matrix(t, r),
        omega_prime=0.5 * (om + om.T),
        lambda_prime=0.5 * (lam + lam.T),
        omega_tilde=omega_tilde(t),
        lambda_tilde=lambda_tilde(t),
        P=p_matrix(t),
        Q=Q_ROT.copy(),
    )


def schur_lambda_prime(z) -> np.ndarray:
    """Conditional derivative covariance obtained numerically from the jet covariance."""
    cov = build_limit_covariances(z)
    return condition_on_zero(cov.omega_prime, 2)


# ---------------------------------------------------------------- boundedness

def boundedness_matrix(t: float) -> np.ndarray:
    """diag(0, Lambda_tilde^{1/2}) Omega_tilde^{-1/2} built from the stable spectral pieces."""
    sf = scalar_families(t)
    P = p_matrix(t)
    om_inv_sqrt = P.T @ np.diag(1.0 / np.sqrt(sf.v)) @ P
    lam_sqrt = Q_ROT.T @ np.diag(np.sqrt([sf.u1, sf.u2])) @ Q_ROT
    left = np.zeros((4, 4))
    left[2:, 2:] = lam_sqrt
    return left @ om_inv_sqrt


def boundedness_matrix_closed(t: float) -> np.ndarray:
    """Same matrix through the entrywise closed forms m1..m6."""
    sf = scalar_families(t)
    bp, bm = sf.b_plus, sf.b_minus
    r21, r22 = np.sqrt(sf.u2 / sf.v1), np.sqrt(sf.u2 / sf.v2)
    r13, r14 = np.sqrt(sf.u1 / sf.v3), np.sqrt(sf.u1 / sf.v4)
    c = bp * bm / 4.0
    m1 = c * (-r21 + r22 - r13 + r14)
    m2 = c * (-r21 + r22 + r13 - r14)
    m3 = c * (r21 - r22 - r13 + r14)
    m4 = c * (r21 - r22 + r13 - r14)
    m5 = bp**2 / 4 * (r21 + r13) + bm**2 / 4 * (r22 + r14)
    m6 = bp**2 / 4 * (r21 - r13) + bm**2 / 4 * (r22 - r14)
    out = np.zeros((4, 4))
    out[2] = [m1, m3, m5, m6]
    out[3] = [m2, m4, m6, m5]
    return out


def boundedness_norm(t: float, n: int = 2) -> float:
    """Operator norm of diag(0, Lambda'^{1/2}) Omega'^{-1/2}; the transverse blocks contribute 1."""
    m = float(np.linalg.norm(boundedness_matrix(t), 2))
    return max(1.0, m) if n >= 2 else m


# ---------------------------------------------------------------- identity suite

@dataclass(frozen=True)
class IdentityCheck:
    name: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tolerance)


def identity_suite(n: int = 3, r: int = 2, t_grid=None) -> list[IdentityCheck]:
    """Deterministic algebraic identities of the limit model over a log grid of t."""
    if t_grid is None:
        t_grid = np.geomspace(1e-4, 40.0, 40)
    errs: dict[str, float] = {k: 0.0 for k in (
        "det_theta", "P_orthogonal", "P_diagonalizes_omega_tilde", "Q_diagonalizes_lambda_tilde",
        "schur_equals_lambda_prime", "v_product_equals_det_f", "u_product_equals_det_f_ratio")}
    rng = np.random.default_rng(12345)
    for t in t_grid:
        t = float(t)
        direction = rng.standard_normal(n)
        z = np.sqrt(t) * direction / np.linalg.norm(direction)
        cov = build_limit_covariances(z, r)
        target = (-np.expm1(-t)) ** r
        errs["det_theta"] = max(errs["det_theta"], abs(np.linalg.det(cov.theta) - target))
        P = cov.P
        errs["P_orthogonal"] = max(errs["P_orthogonal"], np.max(np.abs(P @ P.T - np.eye(4))))
        sf = scalar_families(t)
        D = P @ cov.omega_tilde @ P.T
        errs["P_diagonalizes_omega_tilde"] = max(errs["P_diagonalizes_omega_tilde"],
                                                 np.max(np.abs(D - np.diag(sf.v))))
        L = cov.Q @ lambda_tilde_raw(t) @ cov.Q.T
        errs["Q_diagonalizes_lambda_tilde"] = max(errs["Q_diagonalizes_lambda_tilde"],
                                                  np.max(np.abs(L - np.diag([sf.u1, sf.u2]))))
        S = condition_on_zero(cov.omega_prime, 2)
        errs["schur_equals_lambda_prime"] = max(errs["schur_equals_lambda_prime"],
                                                np.max(np.abs(S - cov.lambda_prime)))
        f = det_f(t)
        errs["v_product_equals_det_f"] = max(errs["v_product_equals_det_f"], abs(np.prod(sf.v) - f))
        errs["u_product_equals_det_f_ratio"] = max(errs["u_product_equals_det_f_ratio"],
                                                   abs(sf.u1 * sf.u2 - f / -np.expm1(-t)))
    tol = {"Q_diagonalizes_lambda_tilde": 1e-12, "schur_equals_lambda_prime": 1e-9}
    return [IdentityCheck(k, float(v), tol.get(k, 1e-10)) for k, v in errs.items()]
