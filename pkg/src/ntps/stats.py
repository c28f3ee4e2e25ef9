"""Streaming sufficient statistics over labeled token sequences.

One pass over a corpus collects everything later stages need: prefix-sum
second moments for the next-token pencil and pooled feature/label moments
(both mean- and sum-pooled) for the label pencil. Accumulators hold raw
sums and are mergeable across shards; finalize() divides by the sample
count once and returns an immutable view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SentenceSample:
    """One labeled sequence: tokens is (ell, d) with ell >= 2 rows."""

    tokens: np.ndarray
    label: int

    def __post_init__(self) -> None:
        self.tokens = np.asarray(self.tokens, dtype=np.float64)
        if self.tokens.ndim != 2:
            raise ValueError(f"tokens must be 2-D, got shape {self.tokens.shape}")
        if self.tokens.shape[0] < 2:
            raise ValueError(
                f"sequence needs at least 2 tokens, got {self.tokens.shape[0]}"
            )
        if not np.all(np.isfinite(self.tokens)):
            raise ValueError("tokens have non-finite entries")
        self.label = int(self.label)
        if self.label < 0:
            raise ValueError(f"label must be nonnegative, got {self.label}")


def selection_products(
    sample: SentenceSample,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-sentence moment contributions via running prefix sums.

    With p_i the sum of the first i tokens, returns
        cov0 = sum_i p_i p_i^T        (i = 1 .. ell-1)
        cov1 = sum_i p_i x_{i+1}^T
        mean_vec = average of all ell tokens
        sum_vec  = sum of all ell tokens
    which equal the explicit products with the prefix-selection and shift
    operators without materializing ell x ell matrices.
    """
    x = sample.tokens
    prefixes = np.cumsum(x[:-1], axis=0)
    cov0 = prefixes.T @ prefixes
    cov1 = prefixes.T @ x[1:]
    return cov0, cov1, x.mean(axis=0), x.sum(axis=0)


@dataclass(frozen=True)
class Moments:
    """Finalized per-sample expectations of the accumulated statistics.

    mean_xx/mean_xy use the mean-pooled sentence vector, sum_xx/sum_xy the
    sum-pooled one; cov0/cov1 are the prefix-sum second moments; yy_trace is
    the expected squared label norm (1.0 for one-hot labels).
    """

    mean_xx: np.ndarray
    mean_xy: np.ndarray
    cov0: np.ndarray
    cov1: np.ndarray
    sum_xx: np.ndarray
    sum_xy: np.ndarray
    yy_trace: float
    n: int

    @property
    def d(self) -> int:
        return self.mean_xx.shape[0]

    @property
    def c(self) -> int:
        return self.mean_xy.shape[1]


@dataclass
class SufficientStats:
    """Mergeable raw-sum accumulator for a corpus of SentenceSamples.

    Carries both pooling variants at once; (d, c) is the only metadata a
    merge has to agree on. Sums are divided by n exactly once, in
    finalize().
    """

    d: int
    c: int
    n: int = 0
    _mean_xx: np.ndarray = field(init=False, repr=False)
    _mean_xy: np.ndarray = field(init=False, repr=False)
    _cov0: np.ndarray = field(init=False, repr=False)
    _cov1: np.ndarray = field(init=False, repr=False)
    _sum_xx: np.ndarray = field(init=False, repr=False)
    _sum_xy: np.ndarray = field(init=False, repr=False)
    _yy: float = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.d < 1 or self.c < 2:
            raise ValueError(f"need d >= 1 and c >= 2, got d={self.d}, c={self.c}")
        self._mean_xx = np.zeros((self.d, self.d))
        self._mean_xy = np.zeros((self.d, self.c))
        self._cov0 = np.zeros((self.d, self.d))
        self._cov1 = np.zeros((self.d, self.d))
        self._sum_xx = np.zeros((self.d, self.d))
        self._sum_xy = np.zeros((self.d, self.c))
        self._yy = 0.0

    def accumulate(self, sample: SentenceSample) -> None:
        """Add one sentence's contributions."""
        if sample.tokens.shape[1] != self.d:
            raise ValueError(
                f"token width {sample.tokens.shape[1]} != accumulator d={self.d}"
            )
        if sample.label >= self.c:
            raise ValueError(f"label {sample.label} out of range for c={self.c}")
        cov0, cov1, mean_vec, sum_vec = selection_products(sample)
        self._cov0 += cov0
        self._cov1 += cov1
        self._mean_xx += np.outer(mean_vec, mean_vec)
        self._mean_xy[:, sample.label] += mean_vec
        self._sum_xx += np.outer(sum_vec, sum_vec)
        self._sum_xy[:, sample.label] += sum_vec
        self._yy += 1.0  # one-hot label squared norm
        self.n += 1

    def accumulate_all(self, samples) -> None:
        for sample in samples:
            self.accumulate(sample)

    def merge(self, other: SufficientStats) -> SufficientStats:
        """Combine two shards into a new accumulator (entrywise sums)."""
        if (self.d, self.c) != (other.d, other.c):
            raise ValueError(
                f"cannot merge stats with (d, c)=({self.d}, {self.c}) "
                f"and ({other.d}, {other.c})"
            )
        out = SufficientStats(self.d, self.c)
        out.n = self.n + other.n
        out._mean_xx = self._mean_xx + other._mean_xx
        out._mean_xy = self._mean_xy + other._mean_xy
        out._cov0 = self._cov0 + other._cov0
        out._cov1 = self._cov1 + other._cov1
        out._sum_xx = self._sum_xx + other._sum_xx
        out._sum_xy = self._sum_xy + other._sum_xy
        out._yy = self._yy + other._yy
        return out

    def finalize(self) -> Moments:
        """Average the raw sums over n samples."""
        if self.n == 0:
            raise ValueError("no samples accumulated")
        n = float(self.n)
        return Moments(
            mean_xx=self._mean_xx / n,
            mean_xy=self._mean_xy / n,
            cov0=self._cov0 / n,
            cov1=self._cov1 / n,
            sum_xx=self._sum_xx / n,
            sum_xy=self._sum_xy / n,
            yy_trace=self._yy / n,
            n=self.n,
        )


def merge(a: SufficientStats, b: SufficientStats) -> SufficientStats:
    """Functional form of SufficientStats.merge."""
    return a.merge(b)
