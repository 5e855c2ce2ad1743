"""CountSketch point queries and (1/k, alpha)-heavy set extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hashing import HashBank, derive_seed
from .space import WORD_BITS, SpaceReport, integer_bits
from .stream import TurnstileStream


def default_rows(n: int) -> int:
    return math.ceil(4 * math.log2(max(n, 2)))


class CountSketchTable:
    """``rows x width`` signed counters; row r adds s_r(i) * delta to bucket h_r(i)."""

    def __init__(self, n: int, width: int, rows: int | None = None, seed: int = 0, real: bool = False, M: int = 1):
        self.n, self.width, self.seed, self.M = int(n), int(width), int(seed), int(M)
        self.rows = rows or default_rows(n)
        self.real = real
        self.buckets = HashBank(self.rows, 2, self.n, self.width, derive_seed(seed, "cs-bucket"))
        self.sign_bank = HashBank(self.rows, 4, self.n, 2, derive_seed(seed, "cs-sign"))
        self.table = np.zeros((self.rows, self.width), dtype=np.float64 if real else np.int64)

    def update_batch(self, indices, deltas) -> None:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size == 0:
            return
        deltas = np.asarray(deltas, dtype=np.float64 if self.real else np.int64)
        h = self.buckets(indices)
        s = self.sign_bank.signs(indices)
        flat = (np.arange(self.rows)[:, None] * self.width + h).ravel()
        vals = (s * deltas[None, :]).ravel()
        if self.real:
            self.table += np.bincount(flat, weights=vals, minlength=self.table.size).reshape(self.table.shape)
        else:
            add = np.zeros(self.table.size, dtype=np.int64)
            np.add.at(add, flat, vals)
            self.table += add.reshape(self.table.shape)

    def update(self, index: int, delta) -> None:
        self.update_batch([index], [delta])

    def consume(self, stream: TurnstileStream) -> "CountSketchTable":
        self.update_batch(stream.indices, stream.deltas)
        return self

    def query(self, indices) -> np.ndarray:
        """Median over rows of s_r(i) * table[r, h_r(i)]."""
        indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        h = self.buckets(indices)
        s = self.sign_bank.signs(indices)
        vals = s * np.take_along_axis(self.table, h, axis=1)
        return np.median(vals, axis=0)

    def query_all(self, chunk: int = 1 << 14) -> np.ndarray:
        return np.concatenate([self.query(np.arange(lo, min(lo + chunk, self.n))) for lo in range(0, self.n, chunk)])

    def f2_estimate(self) -> float:
        """Median over rows of the row's sum of squares; each row is a 4-wise sign (AMS-type) estimator of F2."""
        return float(np.median((self.table.astype(np.float64) ** 2).sum(axis=1)))

    def merge(self, other: "CountSketchTable") -> "CountSketchTable":
        if (self.n, self.width, self.rows, self.seed) != (other.n, other.width, other.rows, other.seed):
            raise ValueError("can only merge sketches with identical parameters and seeds")
        out = CountSketchTable.__new__(CountSketchTable)
        out.__dict__.update(self.__dict__)
        out.table = self.table + other.table
        return out

    def space(self) -> SpaceReport:
        word = WORD_BITS if self.real else integer_bits(self.n * self.M)
        return SpaceReport(
            counter_bits=self.table.size * word,
            hash_seed_bits=self.buckets.seed_bits + self.sign_bank.seed_bits,
        )


def cs_point_query(t: CountSketchTable, i) -> float | np.ndarray:
    out = t.query(i)
    return float(out[0]) if np.ndim(i) == 0 else out


@dataclass
class HeavyReport:
    indices: list[int]
    k: int
    alpha: float
    threshold: float
    f2_estimate: float
    either: list[int] = field(default_factory=list)

    @property
    def set(self) -> set[int]:
        return set(self.indices)


def classify(x, k: int, alpha: float) -> tuple[set[int], set[int], set[int]]:
    """Split coordinates into must-report, must-exclude and either (exact integer arithmetic when possible)."""
    x = np.asarray(x)
    sq = x.astype(object) ** 2 if x.dtype.kind in "iu" else x.astype(np.float64) ** 2
    f2 = sq.sum()
    must = {i for i in range(len(x)) if f2 and sq[i] * k >= f2}
    exclude = {i for i in range(len(x)) if sq[i] * alpha * k < f2} if f2 else set(range(len(x)))
    either = set(range(len(x))) - must - exclude
    return must, exclude, either


def extract_heavy(t: CountSketchTable, k: int, alpha: float, f2_estimate: float,
                  threshold: float | None = None) -> HeavyReport:
    """Report {i : query(i)^2 >= theta * F2 / k} with theta = 1/sqrt(alpha) by default."""
    if alpha < 1:
        raise ValueError("alpha must be at least 1")
    theta = 1.0 / math.sqrt(alpha) if threshold is None else threshold
    if f2_estimate <= 0:
        if np.any(t.table != 0):
            raise ValueError("F2 estimate is zero but the table is not")
        return HeavyReport([], k, alpha, theta, 0.0)
    q = t.query_all()
    cut = theta * f2_estimate / k
    sq = q.astype(np.float64) ** 2
    chosen = np.flatnonzero(sq >= cut)
    # estimates strictly between the two conditions may go either way
    between = np.flatnonzero((sq >= f2_estimate / (alpha * k)) & (sq < f2_estimate / k))
    return HeavyReport(chosen.tolist(), k, alpha, theta, float(f2_estimate), between.tolist())


class HeavyHitterSketch:
    """CountSketch of width 8k; its rows double as sign-sketch estimators of the F2 normalizer."""

    def __init__(self, n: int, k: int, alpha: float, seed: int = 0, real: bool = False,
                 width: int | None = None, rows: int | None = None, M: int = 1):
        self.k, self.alpha = int(k), float(alpha)
        self.table = CountSketchTable(n, width or 8 * k, rows, derive_seed(seed, "table"), real, M)

    def update_batch(self, indices, deltas) -> None:
        self.table.update_batch(indices, deltas)

    def consume(self, stream: TurnstileStream) -> "HeavyHitterSketch":
        self.update_batch(stream.indices, stream.deltas)
        return self

    def report(self) -> HeavyReport:
        return extract_heavy(self.table, self.k, self.alpha, self.table.f2_estimate())

    def merge(self, other: "HeavyHitterSketch") -> "HeavyHitterSketch":
        out = HeavyHitterSketch.__new__(HeavyHitterSketch)
        out.k, out.alpha = self.k, self.alpha
        out.table = self.table.merge(other.table)
        return out

    def space(self) -> SpaceReport:
        return self.table.space()


def heavy_hitters(x_or_stream, k: int, alpha: float, seed: int = 0) -> HeavyReport:
    """Convenience: sketch a stream (or a dense real vector) and extract the heavy set."""
    if isinstance(x_or_stream, TurnstileStream):
        return HeavyHitterSketch(x_or_stream.n, k, alpha, seed, M=x_or_stream.M).consume(x_or_stream).report()
    x = np.asarray(x_or_stream, dtype=np.float64)
    sk = HeavyHitterSketch(len(x), k, alpha, seed, real=True)
    nz = np.flatnonzero(x)
    sk.update_batch(nz, x[nz])
    return sk.report()
