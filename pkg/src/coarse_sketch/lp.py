"""l_p estimation for 0 < p <= 2.

* ``PStableSketch``: y = A x with A's entries drawn from a symmetric p-stable
  law, generated on the fly from limited-independence hashes of (row, col).
  ``median(|y|) / median(|X_p|)`` estimates ||x||_p.
* ``AMSSketch``: 4-wise random signs, median of group means of squared
  projections estimates F_2.
* ``uniform_sample_fp`` and ``fp_twopass_estimate``: pairwise-independent
  coordinate sampling at a rate set by a first-pass estimate, followed by a
  p-stable sketch of the sampled coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .hashing import MERSENNE61, KWiseHash, derive_seed
from .space import WORD_BITS, EstimateReport, SpaceReport
from .stream import TurnstileStream

ROW_CONSTANT = 36
MAX_INDEPENDENCE = 32
# pairwise entries are affine in the row index for a fixed column, which biases the median
MIN_INDEPENDENCE = 4
AMS_GROUPS = 9
AMS_GROUP_CONSTANT = 8
SAMPLING_CONSTANT = 4.0
# entries per generated block of the projection matrix
_BLOCK = 1 << 21
_MASK30 = np.uint64((1 << 30) - 1)
_HALF_RANGE = float(1 << 30)


def gen_p_stable(p: float, theta, tuni):
    """Chambers-Mallows-Stuck transform of (theta, t) into a symmetric p-stable draw."""
    if not 0 < p <= 2:
        raise ValueError("stability index must lie in (0, 2]")
    theta = np.asarray(theta, dtype=np.float64)
    tuni = np.asarray(tuni, dtype=np.float64)
    if np.any(np.abs(theta) >= np.pi / 2) or np.any((tuni <= 0) | (tuni >= 1)):
        raise ValueError("theta must lie in (-pi/2, pi/2) and t in (0, 1)")
    if p == 1:
        return np.tan(theta)
    w = -np.log(tuni)
    return np.sin(p * theta) / np.cos(theta) ** (1.0 / p) * (np.cos(theta * (1.0 - p)) / w) ** ((1.0 - p) / p)


def sample_p_stable(p: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Independent p-stable draws, resampling the measure-zero endpoints."""
    theta = rng.uniform(-np.pi / 2, np.pi / 2, size)
    tuni = rng.uniform(0.0, 1.0, size)
    bad = (np.abs(theta) >= np.pi / 2) | (tuni <= 0)
    while bad.any():
        theta[bad] = rng.uniform(-np.pi / 2, np.pi / 2, bad.sum())
        tuni[bad] = rng.uniform(0.0, 1.0, bad.sum())
        bad = (np.abs(theta) >= np.pi / 2) | (tuni <= 0)
    return gen_p_stable(p, theta, tuni)


@lru_cache(maxsize=1)
def _median_table() -> tuple[np.ndarray, np.ndarray]:
    text = resources.files("coarse_sketch").joinpath("data/pstable_medians.txt").read_text()
    rows = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    arr = np.array(rows, dtype=np.float64)
    return arr[:, 0], arr[:, 1]


def pstable_median(p: float) -> float:
    """median(|X|) for the p-stable law produced by :func:`gen_p_stable` (interpolated table)."""
    if p == 1:
        return 1.0
    ps, meds = _median_table()
    if not ps[0] <= p <= ps[-1]:
        raise ValueError(f"no median tabulated for p={p}")
    return float(np.interp(p, ps, meds))


def rows_for_eps(eps: float, constant: int = ROW_CONSTANT) -> int:
    return math.ceil(constant / eps ** 2)


def independence_for_pstable(eps: float, p: float) -> int:
    return int(min(MAX_INDEPENDENCE, max(MIN_INDEPENDENCE, math.ceil(eps ** (-p)))))


class PStableSketch:
    """Linear sketch y = A x with p-stable A; entry (r, i) is a pure function of (seed, r, i)."""

    def __init__(self, n: int, M: int, p: float, eps: float, seed: int = 0,
                 rows: int | None = None, k: int | None = None, grid: float | None = None):
        if not 0 < p < 2:
            raise ValueError("p-stable sketch needs 0 < p < 2; use AMSSketch for p = 2")
        self.n, self.M, self.p, self.eps, self.seed = int(n), int(M), float(p), float(eps), int(seed)
        self.rows = rows or rows_for_eps(eps)
        self.k = k or independence_for_pstable(eps, p)
        domain = self.rows * self.n
        # one field value per entry; its high and low 30 bits give the angle and the uniform
        self.h = KWiseHash(self.k, domain, MERSENNE61, derive_seed(seed, "entry"))
        # rounding grid for generated entries; pass grid=0 to disable
        self.grid = (eps / (self.n * self.M)) ** 2 if grid is None else grid
        self.y = np.zeros(self.rows, dtype=np.float64)

    def entries(self, cols: np.ndarray) -> np.ndarray:
        """Matrix columns A[:, cols] with shape (rows, len(cols))."""
        cols = np.asarray(cols, dtype=np.int64)
        keys = (np.arange(self.rows, dtype=np.int64)[:, None] * self.n + cols[None, :]).ravel()
        v = self.h.field_values(keys)
        hi = ((v >> np.uint64(31)) & _MASK30).astype(np.float64)
        lo = (v & _MASK30).astype(np.float64)
        theta = ((hi + 0.5) / _HALF_RANGE - 0.5) * np.pi
        x = gen_p_stable(self.p, theta, (lo + 0.5) / _HALF_RANGE).reshape(self.rows, len(cols))
        if self.grid:
            x = np.round(x / self.grid) * self.grid
        return x

    def update_batch(self, indices, deltas) -> None:
        cols, vals = _aggregate(indices, deltas)
        step = max(1, _BLOCK // self.rows)
        for s in range(0, len(cols), step):
            self.y += self.entries(cols[s:s + step]) @ vals[s:s + step]

    def update(self, index: int, delta: int) -> None:
        self.update_batch([index], [delta])

    def consume(self, stream: TurnstileStream) -> "PStableSketch":
        self.update_batch(stream.indices, stream.deltas)
        return self

    def estimate(self) -> float:
        """Estimate of ||x||_p."""
        return float(np.median(np.abs(self.y)) / pstable_median(self.p))

    def merge(self, other: "PStableSketch") -> "PStableSketch":
        if (self.n, self.p, self.rows, self.k, self.seed, self.grid) != (other.n, other.p, other.rows, other.k, other.seed, other.grid):
            raise ValueError("can only merge sketches with identical parameters and seeds")
        out = PStableSketch.__new__(PStableSketch)
        out.__dict__.update(self.__dict__)
        out.y = self.y + other.y
        return out

    def space(self) -> SpaceReport:
        return SpaceReport(
            counter_bits=self.rows * WORD_BITS,
            hash_seed_bits=self.h.seed_bits,
            auxiliary_bits=WORD_BITS,
        )


def _aggregate(indices, deltas) -> tuple[np.ndarray, np.ndarray]:
    """Net delta per distinct index (a linear sketch only needs the sum)."""
    indices = np.asarray(indices, dtype=np.int64)
    deltas = np.asarray(deltas)
    if indices.size == 0:
        return indices, deltas.astype(np.float64)
    cols, inv = np.unique(indices, return_inverse=True)
    if deltas.dtype.kind in "iub":
        vals = np.zeros(len(cols), dtype=np.int64)
        np.add.at(vals, inv, deltas.astype(np.int64))
    else:
        vals = np.bincount(inv, weights=deltas.astype(np.float64), minlength=len(cols))
    nz = vals != 0
    return cols[nz], vals[nz].astype(np.float64)


def pstable_estimate(sk: PStableSketch) -> float:
    return sk.estimate()


class AMSSketch:
    """``groups * per_group`` projections onto 4-wise independent sign vectors."""

    def __init__(self, n: int, eps: float, seed: int = 0, groups: int = AMS_GROUPS, per_group: int | None = None):
        self.n, self.eps, self.seed = int(n), float(eps), int(seed)
        self.groups = int(groups)
        self.per_group = per_group or math.ceil(AMS_GROUP_CONSTANT / eps ** 2)
        self.rows = self.groups * self.per_group
        self.h = KWiseHash(4, self.rows * self.n, MERSENNE61, derive_seed(seed, "ams"))
        self.y = np.zeros(self.rows, dtype=np.float64)

    def signs(self, cols: np.ndarray) -> np.ndarray:
        cols = np.asarray(cols, dtype=np.int64)
        keys = (np.arange(self.rows, dtype=np.int64)[:, None] * self.n + cols[None, :]).ravel()
        bits = self.h.field_values(keys) & np.uint64(1)
        return (1.0 - 2.0 * bits.astype(np.float64)).reshape(self.rows, len(cols))

    def update_batch(self, indices, deltas) -> None:
        cols, vals = _aggregate(indices, deltas)
        step = max(1, _BLOCK // self.rows)
        for s in range(0, len(cols), step):
            self.y += self.signs(cols[s:s + step]) @ vals[s:s + step]

    def consume(self, stream: TurnstileStream) -> "AMSSketch":
        self.update_batch(stream.indices, stream.deltas)
        return self

    def estimate_f2(self) -> float:
        means = (self.y ** 2).reshape(self.groups, self.per_group).mean(axis=1)
        return float(np.median(means))

    def estimate(self) -> float:
        """Estimate of ||x||_2."""
        return math.sqrt(self.estimate_f2())

    def merge(self, other: "AMSSketch") -> "AMSSketch":
        if (self.n, self.rows, self.groups, self.seed) != (other.n, other.rows, other.groups, other.seed):
            raise ValueError("can only merge sketches with identical parameters and seeds")
        out = AMSSketch.__new__(AMSSketch)
        out.__dict__.update(self.__dict__)
        out.y = self.y + other.y
        return out

    def space(self) -> SpaceReport:
        return SpaceReport(counter_bits=self.rows * WORD_BITS, hash_seed_bits=self.h.seed_bits)


def ams_f2_estimate(stream: TurnstileStream, eps: float, seed: int = 0) -> float:
    return AMSSketch(stream.n, eps, seed).consume(stream).estimate_f2()


def norm_sketch(n: int, M: int, p: float, eps: float, seed: int):
    """p-stable sketch for p < 2, AMS for p = 2; both expose estimate() of ||x||_p."""
    if p == 2:
        return AMSSketch(n, eps, seed)
    return PStableSketch(n, M, p, eps, seed)


class PairwiseSampler:
    """Keeps index i iff a pairwise-independent uniform hash of i falls below ``qprob``."""

    def __init__(self, n: int, qprob: float, seed: int):
        if not 0 < qprob <= 1:
            raise ValueError("sampling probability must lie in (0, 1]")
        self.qprob = float(qprob)
        self.h = KWiseHash(2, n, MERSENNE61, seed)

    def __call__(self, indices) -> np.ndarray:
        if self.qprob == 1:
            return np.ones(np.shape(indices), dtype=bool)
        return self.h.uniform(np.asarray(indices, dtype=np.int64)) < self.qprob


def uniform_sample_fp(x, qprob: float, p: float, seed: int = 0) -> float:
    """(1/qprob) * sum of |x_i|^p over a pairwise-independent sample of coordinates."""
    x = np.asarray(x)
    nz = np.flatnonzero(x)
    keep = PairwiseSampler(len(x), qprob, seed)(nz)
    return float(np.sum(np.abs(x[nz[keep]]).astype(np.float64) ** p) / qprob)


@dataclass
class SampledFpSketch:
    first_pass: float
    qprob: float
    sampler: PairwiseSampler
    inner: object
    survivors: int = 0


def fp_twopass_estimate(stream: TurnstileStream, p: float, eps: float, master_seed: int = 0,
                        constant: float = SAMPLING_CONSTANT) -> EstimateReport:
    """Two-pass F_p = ||x||_p^p estimate for 0 < p <= 2."""
    if not 0 < p <= 2:
        raise ValueError("p must lie in (0, 2]")
    n, M = stream.n, stream.M
    first_eps = 1.0 / 3.0
    first = norm_sketch(n, M, p, first_eps, derive_seed(master_seed, "pass1")).consume(stream)
    # shrink so that Z <= F_p whenever the first pass is within its (1 +- 1/3) band
    Z = first.estimate() ** p / (1 + first_eps) ** p
    qprob = 1.0 if Z <= 0 else min(1.0, constant * M ** p / (eps ** 2 * Z))
    sampler = PairwiseSampler(n, qprob, derive_seed(master_seed, "sample"))
    if p == 2:
        inner = AMSSketch(n, eps, derive_seed(master_seed, "pass2"))
    else:
        inner = PStableSketch(n, M, p, eps, derive_seed(master_seed, "pass2"), grid=(eps / M) ** 2)
    keep = sampler(stream.indices)
    inner.update_batch(stream.indices[keep], stream.deltas[keep])
    survivors = len(_aggregate(stream.indices[keep], stream.deltas[keep])[0])
    value = inner.estimate() ** p / qprob
    state = SampledFpSketch(Z, qprob, sampler, inner, survivors)
    return EstimateReport(
        value=float(value),
        factor=1 + eps,
        success_prob=0.9,
        space=first.space() + inner.space() + SpaceReport(hash_seed_bits=state.sampler.h.seed_bits, auxiliary_bits=2 * WORD_BITS),
        details={"Z": Z, "qprob": qprob, "survivors": survivors},
    )
