"""Turnstile streams, exact reference oracles and stream validity checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np


@dataclass(frozen=True)
class Update:
    index: int
    delta: int


@dataclass
class TurnstileStream:
    """Ordered (index, delta) updates to a length-``n`` vector with magnitude bound ``M``.

    Updates are stored as two parallel int64 arrays so sketches can consume
    them in vectorized batches.  Iterating yields :class:`Update` objects.
    """

    n: int
    M: int
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    deltas: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        self.deltas = np.asarray(self.deltas, dtype=np.int64).reshape(-1)
        if self.indices.shape != self.deltas.shape:
            raise ValueError("indices and deltas must have equal length")
        if self.n < 1 or self.M < 1:
            raise ValueError("n and M must be positive")

    @classmethod
    def from_updates(cls, n: int, M: int, updates) -> "TurnstileStream":
        pairs = [(u.index, u.delta) if isinstance(u, Update) else tuple(u) for u in updates]
        if not pairs:
            return cls(n, M)
        idx, dl = zip(*pairs)
        return cls(n, M, np.array(idx, dtype=np.int64), np.array(dl, dtype=np.int64))

    @classmethod
    def from_vector(cls, x, M: int | None = None, seed: int | None = None) -> "TurnstileStream":
        """One update per nonzero coordinate, optionally in a seeded random order."""
        x = np.asarray(x, dtype=np.int64)
        nz = np.flatnonzero(x)
        if seed is not None:
            nz = np.random.default_rng(seed).permutation(nz)
        bound = int(np.abs(x).max()) if M is None and x.size else (M or 1)
        return cls(len(x), max(1, bound), nz, x[nz])

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def __iter__(self) -> Iterator[Update]:
        for i, d in zip(self.indices.tolist(), self.deltas.tolist()):
            yield Update(i, d)

    def permuted(self, seed: int) -> "TurnstileStream":
        perm = np.random.default_rng(seed).permutation(len(self))
        return TurnstileStream(self.n, self.M, self.indices[perm], self.deltas[perm])

    def concat(self, other: "TurnstileStream") -> "TurnstileStream":
        if other.n != self.n:
            raise ValueError("cannot concatenate streams of different dimension")
        return TurnstileStream(
            self.n,
            max(self.M, other.M),
            np.concatenate([self.indices, other.indices]),
            np.concatenate([self.deltas, other.deltas]),
        )

    def validate(self, check_prefix: bool = True) -> None:
        """Raise ValueError unless indices are in range, |delta| <= M and every prefix has |x_i| <= M."""
        if len(self) == 0:
            return
        if self.indices.min() < 0 or self.indices.max() >= self.n:
            raise ValueError(f"update index outside [0, {self.n})")
        if np.abs(self.deltas).max() > self.M:
            raise ValueError("update delta exceeds magnitude bound M")
        if check_prefix and max_prefix_inf_norm(self) > self.M:
            raise ValueError("a prefix of the stream violates ||x||_inf <= M")

    # file format: header "n M", then "index delta" per line, '#' comments
    def dump(self, path) -> None:
        lines = [f"{self.n} {self.M}"]
        lines += [f"{i} {d}" for i, d in zip(self.indices.tolist(), self.deltas.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "TurnstileStream":
        rows = _read_rows(path)
        if not rows or len(rows[0]) != 2:
            raise ValueError("stream file must start with 'n M'")
        n, M = rows[0]
        body = rows[1:]
        if any(len(r) != 2 for r in body):
            raise ValueError("stream lines must be 'index delta'")
        arr = np.array(body, dtype=np.int64).reshape(-1, 2)
        return cls(n, M, arr[:, 0], arr[:, 1])


def _read_rows(path) -> list[list[int]]:
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append([int(tok) for tok in line.split()])
    return rows


@dataclass
class MatrixStream:
    """Entry updates (row, col, delta) to an ``n_rows x n_cols`` matrix."""

    n: int
    M: int
    rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    deltas: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    n_cols: int | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64).reshape(-1)
        self.cols = np.asarray(self.cols, dtype=np.int64).reshape(-1)
        self.deltas = np.asarray(self.deltas, dtype=np.int64).reshape(-1)
        if self.n_cols is None:
            self.n_cols = self.n
        if not (self.rows.shape == self.cols.shape == self.deltas.shape):
            raise ValueError("rows, cols and deltas must have equal length")

    @property
    def shape(self) -> tuple[int, int]:
        return self.n, int(self.n_cols)

    @classmethod
    def from_matrix(cls, a, M: int | None = None, seed: int | None = None) -> "MatrixStream":
        a = np.asarray(a, dtype=np.int64)
        r, c = np.nonzero(a)
        if seed is not None:
            perm = np.random.default_rng(seed).permutation(len(r))
            r, c = r[perm], c[perm]
        bound = M if M is not None else max(1, int(np.abs(a).max()) if a.size else 1)
        return cls(a.shape[0], bound, r, c, a[r, c], n_cols=a.shape[1])

    def __len__(self) -> int:
        return int(self.rows.shape[0])

    def flat(self) -> TurnstileStream:
        """The same updates viewed as a stream over n_rows * n_cols coordinates."""
        return TurnstileStream(self.n * int(self.n_cols), self.M, self.rows * int(self.n_cols) + self.cols, self.deltas)

    def permuted(self, seed: int) -> "MatrixStream":
        perm = np.random.default_rng(seed).permutation(len(self))
        return MatrixStream(self.n, self.M, self.rows[perm], self.cols[perm], self.deltas[perm], self.n_cols)

    def concat(self, other: "MatrixStream") -> "MatrixStream":
        return MatrixStream(
            self.n, max(self.M, other.M),
            np.concatenate([self.rows, other.rows]),
            np.concatenate([self.cols, other.cols]),
            np.concatenate([self.deltas, other.deltas]),
            self.n_cols,
        )

    def dense(self) -> np.ndarray:
        a = np.zeros(self.shape, dtype=np.int64)
        if len(self):
            if self.rows.min() < 0 or self.rows.max() >= self.n or self.cols.min() < 0 or self.cols.max() >= self.n_cols:
                raise ValueError("matrix update outside the declared shape")
            np.add.at(a, (self.rows, self.cols), self.deltas)
        return a

    def dump(self, path) -> None:
        lines = [f"{self.n} {self.n_cols} {self.M}"]
        lines += [f"{r} {c} {d}" for r, c, d in zip(self.rows.tolist(), self.cols.tolist(), self.deltas.tolist())]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "MatrixStream":
        rows = _read_rows(path)
        if not rows or len(rows[0]) != 3:
            raise ValueError("matrix stream file must start with 'n n M'")
        n, nc, M = rows[0]
        arr = np.array(rows[1:], dtype=np.int64).reshape(-1, 3)
        return cls(n, M, arr[:, 0], arr[:, 1], arr[:, 2], n_cols=nc)


@dataclass(frozen=True)
class GEstimator:
    """A symmetric, nondecreasing cost G with G(0) = 0 and polynomial growth of order ``gamma``."""

    evaluate: Callable[[np.ndarray], np.ndarray]
    gamma: float
    name: str = "G"

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("growth parameter gamma must be positive")

    def __call__(self, x):
        return self.evaluate(np.asarray(x, dtype=np.float64))

    def check(self, n_pairs: int = 200, seed: int = 0, span: float = 1e4) -> None:
        """Spot-check the estimator axioms on random pairs; raises ValueError on violation."""
        rng = np.random.default_rng(seed)
        if float(self(np.array([0.0]))[0]) != 0.0:
            raise ValueError("G(0) must be 0")
        a = rng.uniform(1.0, span, n_pairs)
        b = a * rng.uniform(1.0 + 1e-6, 10.0, n_pairs)
        ga, gb = self(a), self(b)
        if not np.allclose(self(-a), ga):
            raise ValueError("G must be symmetric")
        if np.any(gb < ga):
            raise ValueError("G must be nondecreasing in |x|")
        if np.any(gb / ga < (b / a) ** self.gamma * (1 - 1e-9)):
            raise ValueError(f"G grows slower than |x|^{self.gamma}")


def power_g(power: float) -> GEstimator:
    return GEstimator(lambda t: np.abs(t) ** power, gamma=power, name=f"|t|^{power}")


def accumulate(stream: TurnstileStream) -> np.ndarray:
    """Exact frequency vector (int64) of a stream; rejects out-of-range indices."""
    if len(stream) and (stream.indices.min() < 0 or stream.indices.max() >= stream.n):
        raise ValueError(f"update index outside [0, {stream.n})")
    x = np.zeros(stream.n, dtype=np.int64)
    np.add.at(x, stream.indices, stream.deltas)
    return x


def exact_moment(x, p: float) -> float:
    """``||x||_p`` for p > 0, the number of nonzeros for p = 0."""
    if p < 0:
        raise ValueError("p must be nonnegative")
    x = np.asarray(x)
    if p == 0:
        return float(np.count_nonzero(x))
    a = np.abs(x[x != 0]).astype(np.float64)
    if a.size == 0:
        return 0.0
    # factor out the max so large p cannot overflow
    top = a.max()
    return float(top * math.fsum(((a / top) ** p).tolist()) ** (1.0 / p))


def exact_fp(x, p: float) -> float:
    """``sum |x_i|^p`` (count of nonzeros when p = 0)."""
    x = np.asarray(x)
    if p == 0:
        return float(np.count_nonzero(x))
    return math.fsum((np.abs(x[x != 0]).astype(np.float64) ** p).tolist())


def exact_g_norm(x, g: GEstimator) -> float:
    return math.fsum(np.asarray(g(np.asarray(x)), dtype=np.float64).tolist())


def exact_heavy_set(x, k: int) -> set[int]:
    """{i : x_i^2 >= ||x||_2^2 / k}, decided in exact integer arithmetic."""
    if k < 1:
        raise ValueError("k must be at least 1")
    xi = [int(v) for v in np.asarray(x).tolist()]
    f2 = sum(v * v for v in xi)
    if f2 == 0:
        return set()
    return {i for i, v in enumerate(xi) if v * v * k >= f2}


def singular_values(a) -> np.ndarray:
    return np.linalg.svd(np.asarray(a, dtype=np.float64), compute_uv=False)


def exact_schatten(a, p: float) -> float:
    """Schatten-p norm of a dense matrix or a :class:`MatrixStream`."""
    if isinstance(a, MatrixStream):
        a = a.dense()
    return exact_moment(singular_values(a), p)


def exact_cascaded(a, p: float, q: float) -> float:
    """l_p norm of the vector of row-wise l_q norms."""
    if isinstance(a, MatrixStream):
        a = a.dense()
    a = np.asarray(a)
    row_norms = [exact_moment(row, q) for row in a]
    return exact_moment(np.array(row_norms), p)


def prefix_l2_norms(stream: TurnstileStream) -> np.ndarray:
    """l2 norm of the accumulated vector after each update (exact integer F2 tracking)."""
    x: dict[int, int] = {}
    f2 = 0
    out = np.empty(len(stream), dtype=np.float64)
    for t, (i, d) in enumerate(zip(stream.indices.tolist(), stream.deltas.tolist())):
        old = x.get(i, 0)
        new = old + d
        x[i] = new
        f2 += new * new - old * old
        out[t] = math.sqrt(f2)
    return out


def max_prefix_inf_norm(stream: TurnstileStream) -> int:
    x: dict[int, int] = {}
    best = 0
    for i, d in zip(stream.indices.tolist(), stream.deltas.tolist()):
        v = x.get(i, 0) + d
        x[i] = v
        if abs(v) > best:
            best = abs(v)
    return best


def check_bounded_deletion(stream: TurnstileStream, alpha_bd: float) -> bool:
    """True iff no prefix l2 norm falls below (running max of earlier prefix norms) / alpha_bd."""
    if alpha_bd < 1:
        raise ValueError("alpha_bd must be at least 1")
    norms = prefix_l2_norms(stream)
    if norms.size == 0:
        return True
    running = np.maximum.accumulate(norms)
    return bool(np.all(norms * alpha_bd >= running))

