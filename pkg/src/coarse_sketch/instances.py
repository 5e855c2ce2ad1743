"""Generators for hard input distributions and Monte Carlo checks of their separations.

Every generator is a pure function of its seed and emits integer streams that
pass :meth:`TurnstileStream.validate` with the declared M, except the PW11
instance, whose signal carries Gaussian noise and is returned as a real vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hashing import derive_seed
from .lp import AMSSketch
from .stream import GEstimator, TurnstileStream, exact_g_norm, exact_moment

COIN_MODES = ("plain", "bounded_deletion", "random_order")
# offset multiple of sqrt(M) for the bounded-deletion coin stream
BOUNDED_OFFSET = 8.0
# constant in the NO-instance column-sum bound c log n / log log n
NO_COLUMN_CONSTANT = 4.0


# ---------------------------------------------------------------------------
# coin problem


@dataclass(frozen=True)
class CoinStreamSpec:
    length: int
    beta: float
    mode: str = "plain"
    offset: float = BOUNDED_OFFSET
    n: int = 1

    def __post_init__(self):
        if not 0 <= self.beta <= 0.5:
            raise ValueError("bias beta must lie in [0, 1/2]")
        if self.mode not in COIN_MODES:
            raise ValueError(f"unknown coin mode {self.mode!r}; choose from {COIN_MODES}")
        if self.length < 0 or self.n < 1:
            raise ValueError("length must be nonnegative and n positive")

    @property
    def initial(self) -> int:
        return math.ceil(self.offset * math.sqrt(self.length)) if self.mode == "bounded_deletion" else 0

    @property
    def M(self) -> int:
        return max(1, self.initial + self.length)


def coin_flips(length: int, beta: float, rng: np.random.Generator) -> np.ndarray:
    """+1 with probability 1/2 + beta, else -1."""
    return np.where(rng.random(length) < 0.5 + beta, 1, -1).astype(np.int64)


def gen_coin_stream(spec: CoinStreamSpec, seed: int = 0) -> TurnstileStream:
    """Single-coordinate +-1 walk on x_0; bounded mode first inserts the offset."""
    rng = np.random.default_rng(derive_seed(seed, "coin"))
    deltas = np.concatenate([np.ones(spec.initial, dtype=np.int64), coin_flips(spec.length, spec.beta, rng)])
    stream = TurnstileStream(spec.n, spec.M, np.zeros(len(deltas), dtype=np.int64), deltas)
    if spec.mode == "random_order":
        stream = stream.permuted(derive_seed(seed, "order"))
    return stream


def coin_endpoint(spec: CoinStreamSpec, seed: int = 0) -> int:
    """Final value of x_0 without materializing the stream."""
    rng = np.random.default_rng(derive_seed(seed, "coin"))
    return spec.initial + int(coin_flips(spec.length, spec.beta, rng).sum())


@dataclass
class CoinGapReport:
    ratios: np.ndarray
    bound: float
    pass_rate: float
    passed: bool


def verify_coin_gap(g: GEstimator, length: int, trials: int, beta: float | None = None, eps: float = 0.05,
                    constant: float = 1.0, seed: int = 0, floor: float = 0.8) -> CoinGapReport:
    """Ratio G(x_biased) / G(x_fair) over paired trials against C * M^((1/6 - eps) * gamma)."""
    if beta is None:
        beta = length ** (-1.0 / 3.0 - eps)
    fair, biased = CoinStreamSpec(length, 0.0), CoinStreamSpec(length, beta)
    ratios = np.empty(trials)
    for t in range(trials):
        a = exact_g_norm([coin_endpoint(fair, derive_seed(seed, "fair", t))], g)
        b = exact_g_norm([coin_endpoint(biased, derive_seed(seed, "biased", t))], g)
        ratios[t] = math.inf if a == 0 else b / a
    bound = constant * length ** ((1.0 / 6.0 - eps) * g.gamma)
    rate = float(np.mean(ratios >= bound)) if trials else 0.0
    return CoinGapReport(ratios, bound, rate, rate >= floor)


@dataclass
class DistinguisherReport:
    accuracy: float
    threshold: float
    decisions: np.ndarray
    truth: np.ndarray


def coin_distinguisher(length: int, beta: float, trials: int, seed: int = 0, eps: float = 0.5,
                       mode: str = "plain") -> DistinguisherReport:
    """Decide fair vs biased from an AMS estimate of F2 at the end of the coin stream.

    The biased walk ends near 2 beta M, the fair one within a few sqrt(M); the
    cut is (beta M)^2.
    """
    threshold = (beta * length) ** 2
    truth = np.arange(trials) % 2 == 1
    decisions = np.zeros(trials, dtype=bool)
    for t in range(trials):
        spec = CoinStreamSpec(length, beta if truth[t] else 0.0, mode)
        stream = gen_coin_stream(spec, derive_seed(seed, "stream", t))
        sk = AMSSketch(spec.n, eps, derive_seed(seed, "ams", t)).consume(stream)
        decisions[t] = sk.estimate_f2() >= threshold
    acc = float(np.mean(decisions == truth)) if trials else 0.0
    return DistinguisherReport(acc, threshold, decisions, truth)


# ---------------------------------------------------------------------------
# set disjointness


@dataclass
class DisjInstance:
    s: int
    n: int
    z: int
    X: np.ndarray  # (s, n) bits
    I: int | None = None

    def vector(self) -> np.ndarray:
        """Column sums: the frequency vector after every player inserts its bits."""
        return self.X.sum(axis=0).astype(np.int64)

    def stream(self, seed: int | None = None) -> TurnstileStream:
        rows, cols = np.nonzero(self.X)
        order = np.argsort(rows, kind="stable")
        st = TurnstileStream(self.n, self.s, cols[order].astype(np.int64), np.ones(len(cols), dtype=np.int64))
        return st if seed is None else st.permuted(seed)


def gen_disj(n: int, s: int, z: int, seed: int = 0) -> DisjInstance:
    """Bits X_{j,i} ~ Bernoulli(1/s); a YES instance (z=1) plants an all-ones column I."""
    if s < 2:
        raise ValueError("need at least two players")
    if z not in (0, 1):
        raise ValueError("z must be 0 or 1")
    rng = np.random.default_rng(derive_seed(seed, "disj"))
    X = (rng.random((s, n)) < 1.0 / s).astype(np.uint8)
    I = None
    if z == 1:
        I = int(rng.integers(n))
        X[:, I] = 1
    return DisjInstance(s, n, z, X, I)


def no_column_bound(n: int, constant: float = NO_COLUMN_CONSTANT) -> float:
    return constant * math.log(n) / math.log(math.log(n))


@dataclass
class AugDisjLayered:
    n: int
    s: int
    r: int
    T: int  # 1-based index of the instance being asked about
    z: int
    instances: list[DisjInstance]

    def layer_vector(self, upto: int | None = None) -> np.ndarray:
        """Y = sum_{t <= upto} 10^(t-1) Y^t with Y^t the column sums of instance t (exact integers)."""
        upto = self.T if upto is None else upto
        Y = np.zeros(self.n, dtype=object)
        for t in range(1, upto + 1):
            Y = Y + (10 ** (t - 1)) * self.instances[t - 1].vector().astype(object)
        return Y

    @property
    def I(self) -> int | None:
        return self.instances[self.T - 1].I

    def stream(self) -> TurnstileStream:
        """Players insert 10^(t-1) X^t for t <= T; only valid while the entries fit int64."""
        Y = self.layer_vector()
        M = int(max(abs(v) for v in Y)) if self.n else 1
        if M >= 2 ** 62:
            raise ValueError("layered vector does not fit int64 counters; lower r")
        idx, deltas = [], []
        for t in range(1, self.T + 1):
            rows, cols = np.nonzero(self.instances[t - 1].X)
            idx.append(cols.astype(np.int64))
            deltas.append(np.full(len(cols), 10 ** (t - 1), dtype=np.int64))
        return TurnstileStream(self.n, max(M, 1), np.concatenate(idx), np.concatenate(deltas))


def gen_augdisj(n: int, s: int, r: int, seed: int = 0, z: int | None = None, T: int | None = None) -> AugDisjLayered:
    """r layered instances; instance T (uniform in 1..r unless given) has answer z, the rest are NO."""
    rng = np.random.default_rng(derive_seed(seed, "augdisj"))
    T = int(rng.integers(1, r + 1)) if T is None else int(T)
    z = int(rng.integers(2)) if z is None else int(z)
    if not 1 <= T <= r:
        raise ValueError("T must lie in 1..r")
    insts = [gen_disj(n, s, z if t == T else 0, derive_seed(seed, "instance", t)) for t in range(1, r + 1)]
    return AugDisjLayered(n, s, r, T, z, insts)


def yes_lower_bound(inst: AugDisjLayered, p: float) -> float:
    """The planted column alone contributes (10^(T-1) s)^p."""
    return float(10 ** (inst.T - 1) * inst.s) ** p


@dataclass
class AugDisjGapReport:
    p: float
    yes_ok: bool
    K_p: float
    no_violations: int
    no_trials: int
    min_yes_over_no_bound: float

    @property
    def passed(self) -> bool:
        return self.yes_ok and self.no_violations <= 0.05 * self.no_trials


def augdisj_gap(n: int, s: int, r: int, p: float, trials: int, seed: int = 0) -> AugDisjGapReport:
    """YES instances obey the planted-column lower bound; NO instances obey a fitted 1.1 K_p 10^(pT) n bound.

    K_p is fitted as the largest normalized NO moment on a first batch of
    trials and then tested on a fresh batch.
    """
    def no_ratio(inst):
        return exact_moment(np.array(inst.layer_vector(), dtype=np.float64), p) ** p / (10.0 ** (p * inst.T) * n)

    fit = [no_ratio(gen_augdisj(n, s, r, derive_seed(seed, "fit", t), z=0)) for t in range(trials)]
    K_p = max(fit) if fit else 0.0
    fresh = [no_ratio(gen_augdisj(n, s, r, derive_seed(seed, "no", t), z=0)) for t in range(trials)]
    violations = int(sum(v > 1.1 * K_p for v in fresh))
    yes_ok, worst = True, math.inf
    for t in range(trials):
        inst = gen_augdisj(n, s, r, derive_seed(seed, "yes", t), z=1)
        Y = np.array(inst.layer_vector(), dtype=np.float64)
        val = exact_moment(Y, p) ** p
        lo = yes_lower_bound(inst, p)
        yes_ok &= val >= lo * (1 - 1e-12)
        worst = min(worst, lo / (1.1 * K_p * 10.0 ** (p * inst.T) * n))
    return AugDisjGapReport(p, bool(yes_ok), K_p, violations, trials, worst)


@dataclass
class ConcentrationReport:
    mean: float
    K1: float
    deviation_rate: float
    threshold: float
    passed: bool


def verify_Y_concentration(n: int, s: int, r: int, p: float, trials: int, seed: int = 0,
                           T: int | None = None) -> ConcentrationReport:
    """Moments of ||Y_{-I}||_p^p for NO-distributed layers, normalized by 10^(pT).

    Column sums of independent Bernoulli(1/s) bits are drawn directly as
    Binomial(s, 1/s).  K_1 is the fit (mean / (p^p n))^(1/p).
    """
    if p < 2:
        raise ValueError("p must be at least 2")
    rng = np.random.default_rng(derive_seed(seed, "concentration"))
    T = r if T is None else T
    vals = np.empty(trials)
    scale = 10.0 ** (np.arange(1, T + 1) - 1 - T)  # 10^(t-1) / 10^T
    for k in range(trials):
        cols = rng.binomial(s, 1.0 / s, size=(T, n - 1)).astype(np.float64)
        Y = (scale[:, None] * cols).sum(axis=0)
        vals[k] = float(np.sum(Y ** p))
    mean = float(vals.mean()) if trials else 0.0
    K1 = (mean / (p ** p * n)) ** (1.0 / p)
    dev = float(np.mean(np.abs(vals - mean) > 0.1 * n)) if trials else 0.0
    threshold = 5.0 / n
    return ConcentrationReport(mean, K1, dev, threshold, dev <= threshold and mean <= K1 ** p * p ** p * n * (1 + 1e-9))


# ---------------------------------------------------------------------------
# augmented indexing for l0


@dataclass
class AugIndexL0:
    n: int
    t: int
    u: np.ndarray
    i_star: int  # 1-based
    bounds: list[tuple[int, int]]  # [start, end) per segment
    alice: TurnstileStream
    bob_clear: TurnstileStream
    bob_fill: TurnstileStream
    M: int = 2

    @property
    def l(self) -> int:
        return len(self.u)

    def probes(self) -> tuple[TurnstileStream, TurnstileStream]:
        """Streams at the two probe points: before and after Bob fills segment i*."""
        first = self.alice.concat(self.bob_clear)
        return first, first.concat(self.bob_fill)


def segment_lengths(n: int, l: int) -> list[int]:
    return [math.ceil(math.ceil(n ** (i / l)) / 2) for i in range(1, l + 1)]


def _fill(bounds, segs, n, sign) -> TurnstileStream:
    idx = [np.arange(*bounds[j], dtype=np.int64) for j in segs]
    idx = np.concatenate(idx) if idx else np.zeros(0, dtype=np.int64)
    return TurnstileStream(n, 2, idx, np.full(len(idx), sign, dtype=np.int64))


def gen_augindex_l0(u, i_star: int, n: int, t: int) -> AugIndexL0:
    """Alice fills segment i with ones where u_i = 1; Bob clears later set segments, then fills segment i*."""
    if t % 8:
        raise ValueError("t must be divisible by 8")
    u = np.asarray(u, dtype=np.int64)
    l = t // 8
    if len(u) != l:
        raise ValueError(f"u must have length t/8 = {l}")
    if not 1 <= i_star <= l:
        raise ValueError("i* must lie in 1..l")
    lens = segment_lengths(n, l)
    if sum(lens) > n:
        raise ValueError("segments do not fit in n coordinates")
    starts = np.concatenate([[0], np.cumsum(lens)[:-1]]).astype(int)
    bounds = [(int(a), int(a + b)) for a, b in zip(starts, lens)]
    alice = _fill(bounds, [j for j in range(l) if u[j]], n, 1)
    clear = _fill(bounds, [j for j in range(i_star, l) if u[j]], n, -1)
    fill = _fill(bounds, [i_star - 1], n, 1)
    return AugIndexL0(n, t, u, i_star, bounds, alice, clear, fill)


# ---------------------------------------------------------------------------
# heavy hitters


@dataclass
class PW11Instance:
    n: int
    k: int
    support: np.ndarray
    x: np.ndarray
    w: np.ndarray
    family: np.ndarray = field(repr=False)

    @property
    def z(self) -> np.ndarray:
        return self.x + self.w


def pw11_family(n: int, k: int, seed: int = 0) -> np.ndarray:
    """Disjoint random blocks of size k/2 covering a prefix of a random permutation of [n]."""
    if k % 2 or not 2 <= k <= n:
        raise ValueError("k must be even with 2 <= k <= n")
    half = k // 2
    perm = np.random.default_rng(derive_seed(seed, "family")).permutation(n)
    blocks = n // half
    return perm[: blocks * half].reshape(blocks, half)


def gen_pw11(n: int, k: int, seed: int = 0, family_seed: int = 0) -> PW11Instance:
    """Signal +-2 sqrt(n/k) on a uniformly chosen block, plus N(0, I_n) noise."""
    fam = pw11_family(n, k, family_seed)
    rng = np.random.default_rng(derive_seed(seed, "pw11"))
    S = np.sort(fam[rng.integers(len(fam))])
    x = np.zeros(n)
    x[S] = rng.choice([-1.0, 1.0], size=len(S)) * 2.0 * math.sqrt(n / k)
    w = rng.standard_normal(n)
    return PW11Instance(n, k, S, x, w, fam)


def pw11_alpha(n: int, k: int) -> float:
    return n / (4 * k * math.log2(n))


@dataclass
class PlantedHeavy:
    x: np.ndarray
    planted: set[int]
    M: int

    def stream(self, seed: int | None = None) -> TurnstileStream:
        return TurnstileStream.from_vector(self.x, self.M, seed=seed)


def gen_planted_heavy(n: int, k: int, seed: int = 0, count: int | None = None, sigma: float = 3.0,
                      margin: float = 2.0) -> PlantedHeavy:
    """Integer vector with ``count`` (default k/4) entries of squared size >= margin * F2 / k over rounded Gaussian noise."""
    count = max(1, k // 4) if count is None else count
    if margin * count >= k:
        raise ValueError("too many planted items for the requested margin")
    rng = np.random.default_rng(derive_seed(seed, "planted"))
    noise = np.rint(rng.normal(0.0, sigma, n)).astype(np.int64)
    S = rng.choice(n, size=count, replace=False)
    noise[S] = 0
    tail = int(np.sum(noise ** 2))
    # v^2 k >= margin (count v^2 + tail)
    v = math.ceil(math.sqrt(margin * tail / (k - margin * count))) + 1
    x = noise.copy()
    x[S] = rng.choice([-1, 1], size=count) * v
    return PlantedHeavy(x, set(S.tolist()), int(np.max(np.abs(x))))
