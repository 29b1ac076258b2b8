"""Mergeable running moments, confidence half-widths and reproducible RNG streams."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")

Z_99 = NormalDist().inv_cdf(0.995)


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream: same (seed, stream_id) always yields the same draws."""

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed) & (2**64 - 1), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream_id: int) -> "RngStream":
        # nested ids keep sub-streams of different callers apart
        return RngStream(self.seed, self.stream_id * 1_000_003 + stream_id + 1)


@dataclass
class Moments:
    """Count, mean and central power sums M2..M4 with Pebay's pairwise merge."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0
    m3: float = 0.0
    m4: float = 0.0

    @classmethod
    def from_array(cls, x) -> "Moments":
        x = np.asarray(x, dtype=float).ravel()
        if x.size == 0:
            return cls()
        mu = float(x.mean())
        dev = x - mu
        d2 = dev * dev
        return cls(x.size, mu, float(d2.sum()), float((d2 * dev).sum()), float((d2 * d2).sum()))

    def merge(self, other: "Moments") -> "Moments":
        if other.n == 0:
            return Moments(self.n, self.mean, self.m2, self.m3, self.m4)
        if self.n == 0:
            return Moments(other.n, other.mean, other.m2, other.m3, other.m4)
        na, nb = self.n, other.n
        n = na + nb
        delta = other.mean - self.mean
        mean = self.mean + delta * nb / n
        m2 = self.m2 + other.m2 + delta**2 * na * nb / n
        m3 = (self.m3 + other.m3 + delta**3 * na * nb * (na - nb) / n**2
              + 3.0 * delta * (na * other.m2 - nb * self.m2) / n)
        m4 = (self.m4 + other.m4
              + delta**4 * na * nb * (na * na - na * nb + nb * nb) / n**3
              + 6.0 * delta**2 * (na * na * other.m2 + nb * nb * self.m2) / n**2
              + 4.0 * delta * (na * other.m3 - nb * self.m3) / n)
        return Moments(n, mean, m2, m3, m4)

    @property
    def var(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def std(self) -> float:
        return math.sqrt(max(self.var, 0.0))

    @property
    def stderr(self) -> float:
        return self.std / math.sqrt(self.n) if self.n > 0 else math.inf

    @property
    def var_stderr(self) -> float:
        """Asymptotic standard error of the sample variance, (mu4 - sigma^4)/N."""
        if self.n < 2:
            return math.inf
        mu4 = self.m4 / self.n
        s2 = self.m2 / self.n
        return math.sqrt(max(mu4 - s2 * s2, 0.0) / self.n)

    def mean_ci(self, z: float = Z_99) -> float:
        return z * self.stderr

    def var_ci(self, z: float = Z_99) -> float:
        return z * self.var_stderr


def merge_all(parts: Sequence[Moments]) -> Moments:
    out = Moments()
    for p in parts:
        out = out.merge(p)
    return out


def batch_sizes(total: int, batch: int) -> list[int]:
    """Split ``total`` into fixed-size batches; the layout never depends on worker count."""
    if total <= 0:
        return []
    full, rem = divmod(int(total), int(batch))
    return [batch] * full + ([rem] if rem else [])


def run_batches(fn: Callable[[int, int], T], sizes: Sequence[int], threads: int | None = 1) -> list[T]:
    """Evaluate ``fn(batch_index, size)`` for every batch, results in batch order."""
    if threads is None or threads <= 1 or len(sizes) <= 1:
        return [fn(i, s) for i, s in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futs = [pool.submit(fn, i, s) for i, s in enumerate(sizes)]
        return [f.result() for f in futs]
