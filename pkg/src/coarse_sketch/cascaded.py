"""Precision sampling and cascaded (p, q)-norms.

Weights.  w = k / u with u uniform on (0, 1], drawn pairwise independently
per index from a hash, and clamped to [k, n^3 k].  All weights are >= 1.

Reconstruction.  Given per-item estimates a_hat_i whose additive error is
about 1/w_i, keep the items with a_hat_i * w_i >= T (T = 4/eps) and add
max(a_hat_i, T/k) for each.  Item i passes the cut with probability
min(1, k a_i / T), so this is a Horvitz-Thompson sum; kept items have
additive error at most a_i * eps / 4.

Sketches.  ``BucketedPrecisionSketch`` scales row i by w_i^(1/power),
hashes rows into buckets with random signs (R independent hash rows) and
keeps an l2 summary of every bucket.  A row's point estimate is the median
over hash rows of its bucket norms; rows whose estimate clears a
noise-relative threshold enter the Horvitz-Thompson sum above.  With
one-dimensional rows this is an F_q estimator for vectors; with matrix rows
it estimates sum_i ||X_i||^p and hence the cascaded norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hashing import MERSENNE61, HashBank, KWiseHash, derive_seed
from .lp_large import NormEstimator, derive_q
from .space import WORD_BITS, SpaceReport
from .stream import MatrixStream, TurnstileStream

WEIGHT_CONSTANT = 4.0
THRESHOLD_FACTOR = 4.0


@dataclass
class PrecisionWeights:
    w: np.ndarray
    k: float
    cap: float

    def __len__(self) -> int:
        return len(self.w)


@dataclass(frozen=True)
class ApproximatorPair:
    value: float
    rho: float
    f: float

    def approximates(self, tau: float) -> bool:
        """tau/f - rho <= value <= f tau + rho (with a little float slack)."""
        tol = 1e-12 * max(1.0, abs(tau))
        return tau / self.f - self.rho - tol <= self.value <= self.f * tau + self.rho + tol


def precision_k(rho: float, eps: float, constant: float = WEIGHT_CONSTANT) -> int:
    return math.ceil(constant / (rho * eps ** 2))


def weights_from_hash(n: int, k: float, seed: int) -> PrecisionWeights:
    """w_i = k / u_i, u_i from a pairwise-independent hash of i, clamped to [k, n^3 k]."""
    u = KWiseHash(2, n, MERSENNE61, seed).uniform(np.arange(n))
    cap = float(n) ** 3 * k
    return PrecisionWeights(np.clip(k / u, k, cap), float(k), cap)


def draw_weights(n: int, rho: float, eps: float, seed: int = 0, constant: float = WEIGHT_CONSTANT) -> PrecisionWeights:
    if not 1.0 / n <= rho <= 1.0:
        raise ValueError("rho must lie in [1/n, 1]")
    if not 1.0 / n <= eps <= 1.0 / 3.0:
        raise ValueError("eps must lie in [1/n, 1/3]")
    return weights_from_hash(n, precision_k(rho, eps, constant), seed)


def reconstruct(weights: PrecisionWeights, approximations, rho: float, eps: float, f: float = 1.0,
                threshold_factor: float = THRESHOLD_FACTOR) -> ApproximatorPair:
    ahat = np.maximum(np.asarray(approximations, dtype=np.float64), 0.0)
    T = threshold_factor / eps
    keep = ahat * weights.w >= T
    value = float(np.sum(np.maximum(ahat[keep], T / weights.k)))
    return ApproximatorPair(value, rho, f * math.exp(eps))


# ---------------------------------------------------------------------------


class BucketedPrecisionSketch:
    """Precision-sampling sketch of sum_i ||X_i||^power over rows X_i in R^d.

    ``summary_dim``: None keeps each bucket's d-vector exactly; an integer m
    keeps an m-dimensional random-sign projection (an l2 sketch) instead.
    ``inner_q`` is the norm applied to exact bucket vectors (2 for sketches).
    """

    def __init__(self, n_rows: int, d: int, power: float, buckets: int, hash_rows: int = 5,
                 seed: int = 0, summary_dim: int | None = None, inner_q: float = 2.0,
                 threshold: float = 3.0, k: float = 1.0):
        self.n, self.d, self.power = int(n_rows), int(d), float(power)
        self.B, self.R, self.seed = int(buckets), int(hash_rows), int(seed)
        self.threshold, self.inner_q = float(threshold), float(inner_q)
        self.weights = weights_from_hash(self.n, k, derive_seed(seed, "weights"))
        self.scale = self.weights.w ** (1.0 / self.power)
        self.bucket_hash = HashBank(self.R, 2, self.n, self.B, derive_seed(seed, "bucket"))
        self.sign_hash = HashBank(self.R, 4, self.n, 2, derive_seed(seed, "sign"))
        self.m = self.d if summary_dim is None else int(summary_dim)
        self.project = summary_dim is not None
        if self.project:
            if inner_q != 2.0:
                raise ValueError("a projected bucket summary only supports the l2 norm")
            # +-1/sqrt(m) entries, 4-wise independent across the m x d matrix
            self.proj_hash = KWiseHash(4, self.m * self.d, MERSENNE61, derive_seed(seed, "proj"))
        self.table = np.zeros((self.R, self.B, self.m), dtype=np.float64)
        # precompute the bucket and sign of every row once; the universe is small
        rows = np.arange(self.n)
        self._h = self.bucket_hash(rows)
        self._s = self.sign_hash.signs(rows).astype(np.float64)

    def projection(self, cols: np.ndarray) -> np.ndarray:
        cols = np.asarray(cols, dtype=np.int64)
        keys = (np.arange(self.m, dtype=np.int64)[:, None] * self.d + cols[None, :]).ravel()
        bits = self.proj_hash.field_values(keys) & np.uint64(1)
        return ((1.0 - 2.0 * bits.astype(np.float64)) / math.sqrt(self.m)).reshape(self.m, len(cols))

    def update_batch(self, rows, cols, deltas) -> None:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        deltas = np.asarray(deltas, dtype=np.float64)
        if rows.size == 0:
            return
        vals = deltas * self.scale[rows]
        phi = self.projection(cols) if self.project else None  # (m, u)
        for r in range(self.R):
            coef = vals * self._s[r, rows]
            b = self._h[r, rows]
            if self.project:
                # bucket b gains coef * Phi[:, col]
                for j in range(self.m):
                    self.table[r, :, j] += np.bincount(b, weights=coef * phi[j], minlength=self.B)
            else:
                np.add.at(self.table[r], (b, cols), coef)

    def bucket_norms(self) -> np.ndarray:
        if self.project or self.inner_q == 2.0:
            return np.sqrt((self.table ** 2).sum(axis=2))
        return (np.abs(self.table) ** self.inner_q).sum(axis=2) ** (1.0 / self.inner_q)

    def estimate(self) -> float:
        norms = self.bucket_norms()  # (R, B)
        # total scaled l2 mass; each hash row gives one estimate
        mass = float(np.median((norms ** 2).sum(axis=1)))
        if mass == 0:
            return 0.0
        theta = self.threshold * math.sqrt(mass / self.B)
        point = np.median(norms[np.arange(self.R)[:, None], self._h], axis=0)  # (n,)
        keep = point >= theta
        floor = theta ** self.power / self.weights.k
        return float(np.sum(np.maximum(point[keep] ** self.power / self.weights.w[keep], floor)))

    def merge(self, other: "BucketedPrecisionSketch") -> "BucketedPrecisionSketch":
        if (self.n, self.d, self.B, self.R, self.seed, self.m) != (other.n, other.d, other.B, other.R, other.seed, other.m):
            raise ValueError("can only merge sketches with identical parameters and seeds")
        out = BucketedPrecisionSketch.__new__(BucketedPrecisionSketch)
        out.__dict__.update(self.__dict__)
        out.table = self.table + other.table
        return out

    def space(self) -> SpaceReport:
        seeds = self.bucket_hash.seed_bits + self.sign_hash.seed_bits + 2 * 61
        if self.project:
            seeds += self.proj_hash.seed_bits
        return SpaceReport(counter_bits=self.table.size * WORD_BITS, hash_seed_bits=seeds)


# ---------------------------------------------------------------------------
# F_q for vectors, q > 2


def fq_buckets(n: int, q: float) -> int:
    return math.ceil(32 * n ** (1 - 2 / q) * math.log2(max(n, 2)))


class FqPrecisionSketch:
    """Median of ``reps`` independent bucketed precision sketches with scalar rows."""

    def __init__(self, n: int, q: float, seed: int = 0, reps: int = 5, hash_rows: int = 5,
                 buckets: int | None = None, threshold: float = 3.0):
        if q <= 2:
            raise ValueError("the precision-sampling F_q sketch needs q > 2")
        self.n, self.q = int(n), float(q)
        self.B = buckets or fq_buckets(n, q)
        self.parts = [
            BucketedPrecisionSketch(n, 1, q, self.B, hash_rows, derive_seed(seed, "rep", r), threshold=threshold)
            for r in range(reps)
        ]

    def update_batch(self, indices, deltas) -> None:
        indices = np.asarray(indices, dtype=np.int64)
        zeros = np.zeros_like(indices)
        for part in self.parts:
            part.update_batch(indices, zeros, deltas)

    def consume(self, stream: TurnstileStream) -> "FqPrecisionSketch":
        self.update_batch(stream.indices, stream.deltas)
        return self

    def estimate(self) -> float:
        """Estimate of F_q = ||x||_q^q."""
        return float(np.median([part.estimate() for part in self.parts]))

    def merge(self, other: "FqPrecisionSketch") -> "FqPrecisionSketch":
        out = FqPrecisionSketch.__new__(FqPrecisionSketch)
        out.__dict__.update(self.__dict__)
        out.parts = [a.merge(b) for a, b in zip(self.parts, other.parts)]
        return out

    def space(self) -> SpaceReport:
        total = SpaceReport()
        for part in self.parts:
            total = total + part.space()
        return total


def fq_precision_estimate(stream: TurnstileStream, q: float, f_target: float = 2.0, seed: int = 0) -> float:
    """F_q estimate meant to land in [F_q / f_target, f_target * F_q]."""
    return FqPrecisionSketch(stream.n, q, seed).consume(stream).estimate()


class PrecisionSamplingNorm(NormEstimator):
    """l_q norm from the F_q precision sketch; promised factor 2^(1/q)."""

    def __init__(self, n: int, q: float, seed: int = 0, **kw):
        self.q = float(q)
        self.sketch = FqPrecisionSketch(n, q, seed, **kw)
        self.factor = 2.0 ** (1.0 / q)
        self.success_prob = 2.0 / 3.0

    def update_batch(self, indices, deltas) -> None:
        self.sketch.update_batch(indices, deltas)

    def estimate(self) -> float:
        return self.sketch.estimate() ** (1.0 / self.q)

    def space(self) -> SpaceReport:
        return self.sketch.space()


# ---------------------------------------------------------------------------
# cascaded norms


def cascaded_buckets(n: int, p: float) -> int:
    polylog = math.log2(max(n, 2)) ** 2
    spread = n ** (1 - 2 / p) if p > 2 else 1.0
    # guard the ceil against float noise in the fractional power
    return max(1, math.ceil(spread * polylog - 1e-9))


class CascadedSketch:
    """Estimates ||X||_{p,q} for an n x d matrix within factor alpha (alpha >= 8).

    The bucket summaries answer l_{q'} queries with q' = derive_q(d, q, alpha/2)
    clamped at 2, which costs a factor d^(1/q' - 1/q) <= alpha/2.  The output is
    scaled by sqrt(alpha / that factor) so both sides of the window get equal
    room.
    """

    def __init__(self, n: int, d: int, p: float, q: float, alpha: float, seed: int = 0,
                 hash_rows: int = 5, summary_dim: int = 32, reps: int = 5, threshold: float = 3.0):
        if alpha < 8:
            raise ValueError("cascaded estimation needs alpha >= 8")
        if p < 1 or q <= 2:
            raise ValueError("need p >= 1 and q > 2")
        self.n, self.d, self.p, self.q, self.alpha = int(n), int(d), float(p), float(q), float(alpha)
        self.inner_q = derive_q(self.d, self.q, self.alpha / 2, clamp=True) if self.d > 1 else 2.0
        self.inner_factor = self.d ** (1.0 / self.inner_q - 1.0 / self.q)
        self.B = cascaded_buckets(self.n, self.p)
        dim = summary_dim if self.inner_q == 2.0 else None
        self.parts = [
            BucketedPrecisionSketch(self.n, self.d, self.p, self.B, hash_rows, derive_seed(seed, "rep", r),
                                    summary_dim=dim, inner_q=self.inner_q, threshold=threshold)
            for r in range(reps)
        ]

    def update_batch(self, rows, cols, deltas) -> None:
        for part in self.parts:
            part.update_batch(rows, cols, deltas)

    def consume(self, a: MatrixStream) -> "CascadedSketch":
        self.update_batch(a.rows, a.cols, a.deltas)
        return self

    def raw_estimate(self) -> float:
        """Estimate of ||X||_{p,q'} (no window centering)."""
        sigma = float(np.median([part.estimate() for part in self.parts]))
        return sigma ** (1.0 / self.p)

    def estimate(self) -> float:
        return math.sqrt(self.alpha / self.inner_factor) * self.raw_estimate()

    def merge(self, other: "CascadedSketch") -> "CascadedSketch":
        out = CascadedSketch.__new__(CascadedSketch)
        out.__dict__.update(self.__dict__)
        out.parts = [a.merge(b) for a, b in zip(self.parts, other.parts)]
        return out

    def space(self) -> SpaceReport:
        total = SpaceReport()
        for part in self.parts:
            total = total + part.space()
        return total


def cascaded_estimate(a: MatrixStream, p: float, q: float, alpha: float, seed: int = 0) -> float:
    n, d = a.shape
    return CascadedSketch(n, d, p, q, alpha, seed).consume(a).estimate()
