"""Dimensional constants: sphere volumes, Gamma, multinomial coefficients."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

LOG_PI = math.log(math.pi)


@dataclass(frozen=True)
class DimPair:
    """Ambient dimension ``n`` and codimension ``r`` with 1 <= r <= n."""

    n: int
    r: int

    def __post_init__(self):
        if int(self.n) != self.n or int(self.r) != self.r:
            raise ValueError(f"n and r must be integers, got n={self.n}, r={self.r}")
        if self.n < 1:
            raise ValueError(f"ambient dimension must be >= 1, got n={self.n}")
        if not 1 <= self.r <= self.n:
            raise ValueError(f"codimension must satisfy 1 <= r <= n, got r={self.r}, n={self.n}")

    @property
    def is_square(self) -> bool:
        return self.r == self.n


def all_pairs(n_max: int) -> list[DimPair]:
    """Every (n, r) with 1 <= r <= n <= n_max, ordered by n then r."""
    return [DimPair(n, r) for n in range(1, n_max + 1) for r in range(1, n + 1)]


def log_sphere_volume(k: int) -> float:
    if k < 0 or int(k) != k:
        raise ValueError(f"sphere dimension must be a non-negative integer, got {k}")
    h = 0.5 * (k + 1)
    return math.log(2.0) + h * LOG_PI - math.lgamma(h)


def sphere_volume(k: int) -> float:
    """Riemannian volume of the unit sphere S^k in R^{k+1}."""
    return math.exp(log_sphere_volume(k))


def sphere_ratio(n: int, r: int) -> float:
    """vol(S^{n-r}) / vol(S^n)."""
    return math.exp(log_sphere_volume(n - r) - log_sphere_volume(n))


def gamma_fn(x: float) -> float:
    """Euler Gamma on the positive half-line."""
    if not x > 0:
        raise ValueError(f"gamma_fn is defined here only for x > 0, got {x}")
    return math.gamma(x)


def log_multinomial(d: int, alpha: Sequence[int]) -> float:
    _check_multi(d, alpha)
    return math.lgamma(d + 1) - sum(math.lgamma(a + 1) for a in alpha)


def multinomial(d: int, alpha: Sequence[int]) -> float:
    """d! / (alpha_0! ... alpha_n!), exact for d <= 20 and log-space beyond."""
    _check_multi(d, alpha)
    if d <= 20:
        out = math.factorial(d)
        for a in alpha:
            out //= math.factorial(a)
        return float(out)
    return math.exp(log_multinomial(d, alpha))


def _check_multi(d: int, alpha: Sequence[int]) -> None:
    if any(a < 0 for a in alpha):
        raise ValueError(f"multi-index entries must be non-negative, got {tuple(alpha)}")
    if sum(alpha) != d:
        raise ValueError(f"multi-index {tuple(alpha)} has length {sum(alpha)} != degree {d}")


def multi_indices(d: int, nvars: int) -> Iterator[tuple[int, ...]]:
    """All exponent tuples of length ``nvars`` summing to ``d`` (lexicographically descending)."""
    if nvars == 1:
        yield (d,)
        return
    for first in range(d, -1, -1):
        for rest in multi_indices(d - first, nvars - 1):
            yield (first,) + rest


def n_monomials(d: int, n: int) -> int:
    """Number of degree-d monomials in n+1 homogeneous variables."""
    return math.comb(d + n, n)
