"""alpha-approximate Schatten-p norms from a bilinear Gaussian sketch.

The sketch keeps S = G A H^T with Gaussian G (r_G x n) and H (r_H x n),
entries of variance 1/r.  The estimate is gamma * ||S||_q where q = p for
even p and the largest even integer below p otherwise; singular values of
the small matrix S are computed exactly.  gamma is fitted by Monte Carlo.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .hashing import derive_seed
from .space import WORD_BITS, EstimateReport, SpaceReport
from .stream import MatrixStream, exact_moment, singular_values

# rows of the sketch when q = 2 (Frobenius), where the dimension formula degenerates
FROBENIUS_ROWS = 16
H_ROW_FACTOR = 8
# aspect ratio beyond which the long side is first embedded
EMBED_ASPECT = 4
MIN_CALIBRATION_RATE = 0.5
CACHE_ENV = "COARSE_SKETCH_CACHE"


def even_q(p: float) -> int:
    if p < 2:
        raise ValueError("p must be at least 2")
    if float(p).is_integer() and int(p) % 2 == 0:
        return int(p)
    q = int(math.floor(p))
    return q if q % 2 == 0 else q - 1


@dataclass(frozen=True)
class SchattenPlan:
    n: int
    p: float
    alpha: float
    q: int
    t: int
    r_G: int
    r_H: int
    gamma: float | None = None

    @property
    def entries(self) -> int:
        return self.r_G * self.r_H

    def key(self, seeds: str = "default") -> str:
        return f"{self.n} {self.p:g} {self.alpha:g} {self.t} {seeds}"


def target_dimension(n: int, p: float, alpha: float, q: int) -> float:
    """t = (n^(1/2 - 1/p) / alpha)^(1 / (1/2 - 1/q)); q = 2 has no such exponent."""
    if q == 2:
        return 1.0
    return (n ** (0.5 - 1.0 / p) / alpha) ** (1.0 / (0.5 - 1.0 / q))


def plan_schatten(n: int, p: float, alpha: float, polylog_power: float = 2.0, constant: float = 1.0) -> SchattenPlan:
    if alpha < 1:
        raise ValueError("alpha must be at least 1")
    q = even_q(p)
    if q != p:
        need = constant * n ** (1.0 / q - 1.0 / p)
        if alpha < need:
            raise ValueError(f"for p={p} (not even) alpha must be at least n^(1/q - 1/p) = {need:.4g} with q={q}")
    t = int(min(n, max(1, math.ceil(target_dimension(n, p, alpha, q) - 1e-9))))
    if q == 2:
        r_G = r_H = min(n, FROBENIUS_ROWS)
    else:
        r_G = min(n, math.ceil(t * math.log(n / t + 2) ** polylog_power))
        r_H = min(n, H_ROW_FACTOR * t)
    return SchattenPlan(n, float(p), float(alpha), q, t, r_G, r_H)


def gaussian_matrix(rows: int, cols: int, seed: int) -> np.ndarray:
    """Entries N(0, 1/rows), regenerated from the seed."""
    return np.random.default_rng(seed).standard_normal((rows, cols)) / math.sqrt(rows)


def _side_map(r: int, size: int, square: int, seed: int, label: str) -> np.ndarray:
    """r x size map: a Gaussian sketch of the square dimension, after embedding (or padding) this side."""
    G = gaussian_matrix(r, square, derive_seed(seed, label))
    if size == square:
        return G
    if size < square:
        # zero padding of this side is the identity on the first `size` coordinates
        return G[:, :size]
    E = gaussian_matrix(square, size, derive_seed(seed, label, "embed"))
    return G @ E


def square_dim(n_rows: int, n_cols: int) -> int:
    lo, hi = sorted((n_rows, n_cols))
    return hi if hi <= EMBED_ASPECT * lo else EMBED_ASPECT * lo


class BilinearSketchState:
    """S = L A R^T, kept as an r_G x r_H float matrix; linear in A."""

    def __init__(self, plan: SchattenPlan, seed: int = 0, n_rows: int | None = None, n_cols: int | None = None):
        self.plan, self.seed = plan, int(seed)
        self.n_rows = plan.n if n_rows is None else int(n_rows)
        self.n_cols = plan.n if n_cols is None else int(n_cols)
        if square_dim(self.n_rows, self.n_cols) != plan.n:
            raise ValueError("plan dimension must equal the squared-up matrix dimension")
        self.G = _side_map(plan.r_G, self.n_rows, plan.n, seed, "G")
        self.H = _side_map(plan.r_H, self.n_cols, plan.n, seed, "H")
        self.S = np.zeros((plan.r_G, plan.r_H))

    def update_batch(self, rows, cols, deltas) -> None:
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        deltas = np.asarray(deltas, dtype=np.float64)
        if rows.size == 0:
            return
        self.S += (self.G[:, rows] * deltas) @ self.H[:, cols].T

    def update(self, row: int, col: int, delta) -> None:
        self.update_batch([row], [col], [delta])

    def consume(self, stream: MatrixStream) -> "BilinearSketchState":
        self.update_batch(stream.rows, stream.cols, stream.deltas)
        return self

    def consume_dense(self, a) -> "BilinearSketchState":
        self.S += self.G @ np.asarray(a, dtype=np.float64) @ self.H.T
        return self

    def merge(self, other: "BilinearSketchState") -> "BilinearSketchState":
        if (self.plan, self.seed, self.n_rows, self.n_cols) != (other.plan, other.seed, other.n_rows, other.n_cols):
            raise ValueError("can only merge sketches with identical plans and seeds")
        out = BilinearSketchState.__new__(BilinearSketchState)
        out.__dict__.update(self.__dict__)
        out.S = self.S + other.S
        return out

    def sketch_norm(self) -> float:
        return exact_moment(singular_values(self.S), self.plan.q)

    def space(self) -> SpaceReport:
        # the Gaussian maps are regenerated from one 64-bit seed each
        return SpaceReport(counter_bits=self.S.size * WORD_BITS, hash_seed_bits=2 * WORD_BITS)


# ---------------------------------------------------------------------------
# gamma calibration


def cache_path() -> Path:
    root = os.environ.get(CACHE_ENV)
    base = Path(root) if root else Path.home() / ".cache" / "coarse_sketch"
    return base / "schatten_gamma.txt"


def read_cache(path: Path | None = None) -> dict[str, float]:
    """Lines ``n p alpha t seeds gamma``; '#' starts a comment."""
    path = cache_path() if path is None else Path(path)
    out: dict[str, float] = {}
    if not path.exists():
        return out
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].split()
        if len(line) == 6:
            out[" ".join(line[:5])] = float(line[5])
    return out


def write_cache(key: str, gamma: float, path: Path | None = None) -> None:
    path = cache_path() if path is None else Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = read_cache(path)
    entries[key] = gamma
    lines = ["# n p alpha t seeds gamma"] + [f"{k} {v:.17g}" for k, v in sorted(entries.items())]
    path.write_text("\n".join(lines) + "\n")


def _ratios(plan: SchattenPlan, a: np.ndarray, trials: int, seed: int, label: str) -> np.ndarray:
    truth = exact_moment(singular_values(a), plan.p)
    out = np.empty(trials)
    for k in range(trials):
        st = BilinearSketchState(plan, derive_seed(seed, label, k)).consume_dense(a)
        out[k] = st.sketch_norm() / truth
    return out


def calibration_ratios(plan: SchattenPlan, trials: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Sketch-to-truth ratios on the identity and on random rank-one matrices."""
    ident = _ratios(plan, np.eye(plan.n), trials, seed, "identity")
    rng = np.random.default_rng(derive_seed(seed, "rank1"))
    rank1 = np.empty(trials)
    for k in range(trials):
        a = np.outer(rng.standard_normal(plan.n), rng.standard_normal(plan.n))
        rank1[k] = _ratios(plan, a, 1, derive_seed(seed, "rank1-sketch", k), "r")[0]
    return ident, rank1


def best_gamma(ratio_sets, alpha: float) -> tuple[float, float]:
    """gamma maximizing the smallest success rate of 1 <= gamma * ratio <= alpha across the sets."""
    cands = sorted({c for rs in ratio_sets for r in rs if r > 0 for c in (1.0 / r, alpha / r)})
    best, best_rate = math.nan, -1.0
    for g in cands:
        rate = min(float(np.mean((g * rs >= 1 - 1e-12) & (g * rs <= alpha * (1 + 1e-12)))) for rs in ratio_sets)
        if rate > best_rate:
            best, best_rate = g, rate
    # slide to the middle of the optimal interval to avoid sitting on an edge
    same = [g for g in cands if min(float(np.mean((g * rs >= 1 - 1e-12) & (g * rs <= alpha * (1 + 1e-12))))
                                    for rs in ratio_sets) == best_rate]
    if same:
        best = math.sqrt(min(same) * max(same))
    return best, best_rate


def calibrate_gamma(plan: SchattenPlan, trials: int = 100, seed: int = 0, use_cache: bool = True,
                    path: Path | None = None) -> float:
    key = plan.key(f"s{seed}x{trials}")
    if use_cache:
        hit = read_cache(path).get(key)
        if hit is not None:
            return hit
    ident, rank1 = calibration_ratios(plan, trials, derive_seed(seed, "calibrate"))
    gamma, rate = best_gamma([ident, rank1], plan.alpha)
    if not rate >= MIN_CALIBRATION_RATE:
        raise ValueError(
            f"no feasible gamma: best joint success {rate:.2f} < {MIN_CALIBRATION_RATE}; identity ratios "
            f"[{ident.min():.3g}, {ident.max():.3g}], rank-one ratios [{rank1.min():.3g}, {rank1.max():.3g}], "
            f"alpha={plan.alpha}"
        )
    if use_cache:
        write_cache(key, gamma, path)
    return gamma


def with_gamma(plan: SchattenPlan, **kw) -> SchattenPlan:
    return plan if plan.gamma is not None else replace(plan, gamma=calibrate_gamma(plan, **kw))


def schatten_alpha_estimate(st: BilinearSketchState, plan: SchattenPlan | None = None) -> float:
    plan = st.plan if plan is None else plan
    if plan.gamma is None:
        raise ValueError("plan has no gamma; call calibrate_gamma or with_gamma first")
    return plan.gamma * st.sketch_norm()


def schatten_estimate(a, p: float, alpha: float, seed: int = 0, plan: SchattenPlan | None = None) -> EstimateReport:
    """Sketch a dense matrix or a MatrixStream and return gamma * ||G A H^T||_q."""
    if isinstance(a, MatrixStream):
        n_rows, n_cols = a.shape
    else:
        a = np.asarray(a, dtype=np.float64)
        n_rows, n_cols = a.shape
    if plan is None:
        plan = with_gamma(plan_schatten(square_dim(n_rows, n_cols), p, alpha))
    st = BilinearSketchState(plan, seed, n_rows, n_cols)
    st.consume(a) if isinstance(a, MatrixStream) else st.consume_dense(a)
    return EstimateReport(
        value=schatten_alpha_estimate(st, plan),
        factor=plan.alpha,
        success_prob=2.0 / 3.0,
        space=st.space(),
        details={"q": plan.q, "t": plan.t, "r_G": plan.r_G, "r_H": plan.r_H, "gamma": plan.gamma},
    )


def subspace_embed_check(G, A, eps: float) -> bool:
    """True iff the nonzero singular values of A survive left-multiplication by G within (1 +- eps)."""
    sa = singular_values(A)
    if sa.size == 0 or sa[0] == 0:
        return True
    rank = int(np.sum(sa > sa[0] * 1e-10))
    sga = singular_values(np.asarray(G) @ np.asarray(A))
    if sga.size < rank:
        return False
    lo, hi = (1 - eps) * sa[:rank], (1 + eps) * sa[:rank]
    return bool(np.all((sga[:rank] >= lo) & (sga[:rank] <= hi)))
