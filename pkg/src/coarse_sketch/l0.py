"""Distinct-element (l0) estimators for turnstile streams.

RoughL0Sketch
    Subsamples coordinates at ``t`` geometric levels with ratio floor(n^(1/t)),
    hashes survivors into ``c`` buckets per level and keeps ``K`` random-sign
    copies of every bucket modulo a small prime.  The deepest level with more
    than ``c1`` occupied buckets gives an n^(1/t)-approximation.

LevelBinSketch
    Halving levels (level ``a`` keeps items whose hash has >= a trailing zero
    bits); every level throws its survivors into ``K`` bins whose contents are
    random field multiples of the frequencies.  Counting occupied bins and
    inverting the balls-into-bins occupancy curve gives a (1 +- eps) estimate.

twopass_estimate / threepass_estimate
    Compose the two: a rough first pass locates a window of levels, the
    second pass reads the right level.  The three-pass variant keeps only a
    single level in its last pass.
"""

from __future__ import annotations

import json
import math
import struct
from collections.abc import Iterator
from dataclasses import asdict, dataclass, replace

import numpy as np

from .hashing import HashBank, KWiseHash, derive_seed, independence_for_eps, lsb_array, sample_prime
from .space import EstimateReport, SpaceReport, modulus_bits
from .stream import TurnstileStream

L0Estimate = EstimateReport

EPS0 = 0.1
SELECT_FRACTION = 0.011
# bins = BIN_SCALE / eps^2; see the design notes in the README
BIN_SCALE = 256
THREEPASS_BIN_SCALE = 16
# two-pass calls made inside the three-pass estimator run at this fixed accuracy
THREEPASS_COARSE_EPS = 0.25

_MAGIC = b"CSL0"
_VERSION = 1


def integer_root(n: int, t: int) -> int:
    """floor(n ** (1/t)) computed exactly."""
    r = int(round(n ** (1.0 / t)))
    while r ** t > n:
        r -= 1
    while (r + 1) ** t <= n:
        r += 1
    return r


def _log2_ceil(m: int) -> int:
    return max(1, math.ceil(math.log2(m))) if m > 1 else 1


def _scatter_sum(flat_index: np.ndarray, values: np.ndarray, size: int) -> np.ndarray:
    """Exact integer sums of ``values`` grouped by ``flat_index``."""
    if np.abs(values).sum() < 2 ** 53:
        return np.rint(np.bincount(flat_index, weights=values, minlength=size)).astype(np.int64)
    out = np.zeros(size, dtype=np.int64)
    np.add.at(out, flat_index, values)
    return out


def _check_replayable(stream):
    if isinstance(stream, Iterator):
        raise ValueError("multi-pass estimation needs a replayable stream, got a one-shot iterator")
    if not isinstance(stream, TurnstileStream):
        raise TypeError("expected a TurnstileStream")


# ---------------------------------------------------------------------------
# n^(1/t)-approximator


@dataclass(frozen=True)
class RoughL0Config:
    t: int = 4
    c1: int = 25
    c2: int = 100
    beta: float = 1 / 8
    buckets: int | None = None   # default c1^2 / beta^2
    copies: int | None = None    # default ceil(log_{3/2}(100 c1))
    prime: int | None = None     # default: random prime in [D, 2D], D = c^3 log^2 M

    @property
    def c(self) -> int:
        return self.buckets if self.buckets is not None else int(round(self.c1 ** 2 / self.beta ** 2))

    @property
    def K(self) -> int:
        return self.copies if self.copies is not None else math.ceil(math.log(100 * self.c1) / math.log(1.5))


L0_PROFILES = {
    "full": RoughL0Config(c1=25, c2=100, beta=1 / 8),
    "desk": RoughL0Config(c1=5, c2=20, beta=1 / 2),
}


def rough_config(profile: str = "full", **overrides) -> RoughL0Config:
    if profile not in L0_PROFILES:
        raise ValueError(f"unknown l0 profile {profile!r}; choose from {sorted(L0_PROFILES)}")
    return replace(L0_PROFILES[profile], **overrides)


def rough_prime_range(c: int, M: int) -> tuple[int, int]:
    D = c ** 3 * _log2_ceil(M) ** 2
    return D, 2 * D


class RoughL0Sketch:
    def __init__(self, n: int, M: int, config: RoughL0Config | None = None, seed: int = 0):
        cfg = config or RoughL0Config()
        if cfg.t < 1:
            raise ValueError("need at least one level")
        self.n, self.M, self.config, self.seed = int(n), int(M), cfg, int(seed)
        self.t, self.c, self.K = cfg.t, cfg.c, cfg.K
        self.c1 = cfg.c1
        self.base = integer_root(self.n, self.t)
        if self.base < 2:
            raise ValueError("n^(1/t) must be at least 2")
        # the output scale must not exceed the level ratio, else l0 = 1 is overestimated
        self.c2 = min(cfg.c2, self.base)
        self.h = KWiseHash(2, self.n, self.n, derive_seed(seed, "level"))
        self.g = KWiseHash(2, self.n, self.c, derive_seed(seed, "bucket"))
        self.signs = HashBank(self.K, 4, self.n, 2, derive_seed(seed, "signs"))
        if cfg.prime is not None:
            self.p = int(cfg.prime)
        else:
            lo, hi = rough_prime_range(self.c, self.M)
            self.p = sample_prime(lo, hi, derive_seed(seed, "prime"))
        if self.p >= 1 << 62:
            raise ValueError("counter modulus must stay below 2^62")
        self.counters = np.zeros((self.t, self.K, self.c), dtype=np.int64)

    def levels_of(self, idx: np.ndarray) -> np.ndarray:
        """Number of levels each index survives: largest j <= t with h(x) divisible by base^j."""
        hv = self.h(np.asarray(idx, dtype=np.int64))
        b = np.zeros(hv.shape, dtype=np.int64)
        for j in range(1, self.t + 1):
            b += (hv % (self.base ** j)) == 0
        return b

    def update(self, index: int, delta: int) -> None:
        self.update_batch(np.array([index]), np.array([delta]))

    def update_batch(self, indices, deltas) -> None:
        indices = np.asarray(indices, dtype=np.int64)
        deltas = np.asarray(deltas, dtype=np.int64)
        if indices.size == 0:
            return
        b = self.levels_of(indices)
        g = self.g(indices)
        s = self.signs.signs(indices)  # (K, u)
        keep = b > 0
        if not keep.any():
            return
        b, g, s, deltas = b[keep], g[keep], s[:, keep], deltas[keep]
        # exact signed sums per (deepest level, copy, bucket), then every level <= b
        copy = np.arange(self.K)[:, None]
        flat = ((b[None, :] * self.K + copy) * self.c + g[None, :]).ravel()
        agg = _scatter_sum(flat, (deltas[None, :] * s).ravel(), (self.t + 1) * self.K * self.c)
        agg = agg.reshape(self.t + 1, self.K, self.c)
        suffix = np.cumsum(agg[::-1], axis=0)[::-1][1:]
        self.counters = (self.counters + suffix % self.p) % self.p

    def consume(self, stream: TurnstileStream, chunk: int = 1 << 16) -> "RoughL0Sketch":
        for lo in range(0, len(stream), chunk):
            self.update_batch(stream.indices[lo:lo + chunk], stream.deltas[lo:lo + chunk])
        return self

    def occupancy(self) -> np.ndarray:
        """Occupied buckets per level (a bucket counts if any sign copy is nonzero)."""
        return (self.counters != 0).any(axis=1).sum(axis=1)

    def level(self) -> int:
        occ = self.occupancy()
        hits = np.flatnonzero(occ > self.c1)
        return int(hits[-1]) + 1 if hits.size else 0

    def estimate(self) -> EstimateReport:
        J = self.level()
        value = self.c2 * self.n ** (J / self.t)
        return EstimateReport(
            value=float(value),
            factor=float(self.n ** (1.0 / self.t)),
            success_prob=0.9,
            space=self.space(),
            details={"J": J},
        )

    def expected_level(self, l0: int) -> int:
        """Largest j whose expected survivor count l0 / base^j is at least the configured c2."""
        j = 0
        while j < self.t and l0 / self.base ** (j + 1) >= self.config.c2:
            j += 1
        return j

    def compatible(self, other: "RoughL0Sketch") -> bool:
        return (self.n, self.M, self.config, self.seed, self.p) == (other.n, other.M, other.config, other.seed, other.p)

    def merge(self, other: "RoughL0Sketch") -> "RoughL0Sketch":
        if not self.compatible(other):
            raise ValueError("can only merge sketches with identical parameters and seeds")
        out = self.copy()
        out.counters = (self.counters + other.counters) % self.p
        return out

    def copy(self) -> "RoughL0Sketch":
        out = RoughL0Sketch.__new__(RoughL0Sketch)
        out.__dict__.update(self.__dict__)
        out.counters = self.counters.copy()
        return out

    def space(self) -> SpaceReport:
        seed_bits = self.h.seed_bits + self.g.seed_bits + self.signs.seed_bits
        return SpaceReport(
            counter_bits=self.t * self.K * self.c * modulus_bits(self.p),
            hash_seed_bits=seed_bits,
            auxiliary_bits=modulus_bits(self.p),
        )

    def to_bytes(self) -> bytes:
        header = {"kind": "rough", "n": self.n, "M": self.M, "seed": self.seed, "p": self.p, "config": asdict(self.config)}
        return _pack(header, self.counters)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "RoughL0Sketch":
        header, counters = _unpack(blob, "rough")
        cfg = replace(RoughL0Config(**header["config"]), prime=header["p"])
        sk = cls(header["n"], header["M"], cfg, header["seed"])
        sk.config = RoughL0Config(**header["config"])
        sk.counters = counters.reshape(sk.counters.shape).astype(np.int64)
        return sk


def rough_estimate(stream: TurnstileStream, t: int = 4, profile: str = "full", seed: int = 0, **overrides) -> EstimateReport:
    sk = RoughL0Sketch(stream.n, stream.M, rough_config(profile, t=t, **overrides), seed)
    return sk.consume(stream).estimate()


# ---------------------------------------------------------------------------
# balls into bins


def balls_to_bins_estimate(T: int, K: int, level_scale: float = 1.0) -> float:
    """Invert E[occupied bins] = K (1 - (1 - 1/K)^A) for the ball count A, times ``level_scale``."""
    if K < 2:
        raise ValueError("need at least two bins")
    if T < 0 or T > K:
        raise ValueError("occupied bin count must lie in [0, K]")
    if T == K:
        raise ValueError("every bin is occupied; the level is too crowded to invert")
    return float(level_scale * math.log1p(-T / K) / math.log1p(-1.0 / K))


# ---------------------------------------------------------------------------
# halving levels with K bins each


class LevelBinSketch:
    """Bins at absolute halving levels ``lo..hi``.

    An item x lives in level a iff lsb(h1(x)) >= a (levels <= 0 hold every
    item).  Its bin is h3(h2(x)) and it adds ``delta * u[h4(h2(x))] mod p``.
    """

    def __init__(self, n: int, M: int, K: int, lo: int, hi: int, seed: int,
                 k_indep: int = 2, prime: int | None = None):
        if hi < lo:
            raise ValueError("empty level window")
        if K < 2:
            raise ValueError("need at least two bins")
        self.n, self.M, self.K, self.lo, self.hi, self.seed = int(n), int(M), int(K), int(lo), int(hi), int(seed)
        self.k_indep = int(k_indep)
        self.depth = _log2_ceil(self.n)
        self.h1 = KWiseHash(2, self.n, 1 << self.depth, derive_seed(seed, "h1"))
        self.h2 = KWiseHash(2, self.n, self.K ** 3, derive_seed(seed, "h2"))
        self.h3 = KWiseHash(self.k_indep, self.K ** 3, self.K, derive_seed(seed, "h3"))
        self.h4 = KWiseHash(2, self.K ** 3, self.K, derive_seed(seed, "h4"))
        D = 100 * self.K * _log2_ceil(self.M)
        if prime is None:
            # keep products of two residues inside int64
            hi_p = min(D ** 3, (1 << 31) - 1) if D < (1 << 30) else min(D ** 3, (1 << 63) - 1)
            prime = sample_prime(D, hi_p, derive_seed(seed, "prime"))
        self.p = int(prime)
        rng = np.random.default_rng(derive_seed(seed, "u"))
        self.u = rng.integers(0, self.p, size=self.K, dtype=np.int64) if self.p < (1 << 62) else None
        if self.u is None:
            raise ValueError("modulus too large")
        self.counters = np.zeros((self.hi - self.lo + 1, self.K), dtype=np.int64)

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def _contrib(self, deltas: np.ndarray, mult: np.ndarray) -> np.ndarray:
        v = deltas % self.p
        if self.p < (1 << 31):
            return (v * mult) % self.p
        return np.array([(int(a) * int(b)) % self.p for a, b in zip(v, mult)], dtype=np.int64)

    def update_batch(self, indices, deltas) -> None:
        indices = np.asarray(indices, dtype=np.int64)
        deltas = np.asarray(deltas, dtype=np.int64)
        if indices.size == 0:
            return
        depth = lsb_array(self.h1.field_values(indices) % np.uint64(1 << self.depth), self.depth)
        keep = depth >= self.lo
        if not keep.any():
            return
        indices, deltas, depth = indices[keep], deltas[keep], depth[keep]
        key = self.h2(indices)
        bins = self.h3(key)
        contrib = self._contrib(deltas, self.u[self.h4(key)])
        top = np.minimum(depth, self.hi) - self.lo
        agg = _scatter_sum(top * self.K + bins, contrib, self.counters.size).reshape(self.counters.shape)
        # an item reaching level a is in every level <= a
        agg %= self.p
        suffix = np.cumsum(agg[::-1], axis=0)[::-1] % self.p
        self.counters = (self.counters + suffix) % self.p

    def consume(self, stream: TurnstileStream, chunk: int = 1 << 16) -> "LevelBinSketch":
        for s in range(0, len(stream), chunk):
            self.update_batch(stream.indices[s:s + chunk], stream.deltas[s:s + chunk])
        return self

    def occupied(self) -> np.ndarray:
        return (self.counters != 0).sum(axis=1)

    def level_estimate(self, a: int) -> float:
        T = int(self.occupied()[a - self.lo])
        return balls_to_bins_estimate(min(T, self.K - 1), self.K, 2.0 ** max(a, 0))

    def select_level(self, fraction: float = SELECT_FRACTION) -> int | None:
        hits = np.flatnonzero(self.occupied() > fraction * self.K)
        return int(self.lo + hits[-1]) if hits.size else None

    def merge(self, other: "LevelBinSketch") -> "LevelBinSketch":
        if (self.n, self.M, self.K, self.lo, self.hi, self.seed, self.p) != (other.n, other.M, other.K, other.lo, other.hi, other.seed, other.p):
            raise ValueError("can only merge sketches with identical parameters and seeds")
        out = LevelBinSketch.__new__(LevelBinSketch)
        out.__dict__.update(self.__dict__)
        out.counters = (self.counters + other.counters) % self.p
        return out

    def space(self) -> SpaceReport:
        seeds = self.h1.seed_bits + self.h2.seed_bits + self.h3.seed_bits + self.h4.seed_bits
        return SpaceReport(
            counter_bits=self.counters.size * modulus_bits(self.p),
            hash_seed_bits=seeds,
            auxiliary_bits=(self.K + 1) * modulus_bits(self.p),  # the vector u and p
        )

    def to_bytes(self) -> bytes:
        header = {"kind": "levelbin", "n": self.n, "M": self.M, "K": self.K, "lo": self.lo, "hi": self.hi,
                  "seed": self.seed, "k_indep": self.k_indep, "p": self.p}
        return _pack(header, self.counters)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "LevelBinSketch":
        h, counters = _unpack(blob, "levelbin")
        sk = cls(h["n"], h["M"], h["K"], h["lo"], h["hi"], h["seed"], h["k_indep"], h["p"])
        sk.counters = counters.reshape(sk.counters.shape).astype(np.int64)
        return sk


@dataclass(frozen=True)
class TwoPassPlan:
    eps: float
    K: int
    B: int
    R: int
    k_indep: int

    @property
    def window(self) -> tuple[int, int]:
        return self.B - self.R - 10, self.B + self.R + 10


def plan_twopass(eps: float, rough_value: float, n: int, t_rough: int, bin_scale: int = BIN_SCALE) -> TwoPassPlan:
    K = math.ceil(bin_scale / eps ** 2)
    B = int(round(math.log2(max(rough_value, 1.0)) - math.log2(K)))
    # the rough estimate is off by at most n^(1/t) = 2^R halvings
    R = math.ceil(math.log2(n) / t_rough)
    return TwoPassPlan(eps, K, B, R, independence_for_eps(eps))


class TwoPassL0Sketch:
    """Second pass: the level window around the rough estimate plus a level-0 small-count branch."""

    def __init__(self, n: int, M: int, plan: TwoPassPlan, seed: int):
        self.plan = plan
        lo, hi = plan.window
        self.window = LevelBinSketch(n, M, plan.K, lo, hi, derive_seed(seed, "window"), plan.k_indep)
        self.small = LevelBinSketch(n, M, plan.K, 0, 0, derive_seed(seed, "small"), plan.k_indep)

    def update_batch(self, indices, deltas) -> None:
        self.window.update_batch(indices, deltas)
        self.small.update_batch(indices, deltas)

    def consume(self, stream: TurnstileStream) -> "TwoPassL0Sketch":
        self.window.consume(stream)
        self.small.consume(stream)
        return self

    def small_estimate(self) -> float:
        """Level-0 count, or -1 when it exceeds K/32."""
        est = self.small.level_estimate(0)
        return est if est <= self.plan.K / 32 else -1.0

    def large_estimate(self) -> float:
        a = self.window.select_level()
        if a is None:
            a = self.window.lo
        return self.window.level_estimate(a)

    def estimate(self) -> float:
        small = self.small_estimate()
        return small if small != -1.0 else self.large_estimate()

    def merge(self, other: "TwoPassL0Sketch") -> "TwoPassL0Sketch":
        out = TwoPassL0Sketch.__new__(TwoPassL0Sketch)
        out.plan = self.plan
        out.window = self.window.merge(other.window)
        out.small = self.small.merge(other.small)
        return out

    def space(self) -> SpaceReport:
        return self.window.space() + self.small.space()


def rough_levels_for(n: int, M: int) -> int:
    """Level count giving a (log)-factor first pass: t = log n / log log max(M, n)."""
    m = max(M, n, 4)
    return max(1, math.ceil(math.log2(n) / math.log2(math.log2(m))))


def _check_eps(eps: float, eps0: float):
    if not 0 < eps <= eps0:
        raise ValueError(f"eps must lie in (0, {eps0}]")


def twopass_estimate(stream: TurnstileStream, eps: float, master_seed: int = 0,
                     profile: str = "desk", eps0: float = EPS0, bin_scale: int = BIN_SCALE) -> EstimateReport:
    _check_replayable(stream)
    _check_eps(eps, eps0)
    return _twopass(stream, eps, master_seed, profile, bin_scale)


def _twopass(stream, eps, master_seed, profile, bin_scale):
    n, M = stream.n, stream.M
    t = rough_levels_for(n, M)
    while integer_root(n, t) < 2:
        t -= 1
    rough = RoughL0Sketch(n, M, rough_config(profile, t=t), derive_seed(master_seed, "pass1")).consume(stream)
    plan = plan_twopass(eps, rough.estimate().value, n, t, bin_scale)
    sk = TwoPassL0Sketch(n, M, plan, derive_seed(master_seed, "pass2")).consume(stream)
    small = sk.small_estimate()
    value = small if small != -1.0 else sk.large_estimate()
    return EstimateReport(
        value=value,
        factor=1 + eps,
        success_prob=0.8,
        space=rough.space() + sk.space(),
        details={"B": plan.B, "K": plan.K, "branch": "small" if small != -1.0 else "levels",
                 "level": sk.window.select_level()},
    )


def threepass_estimate(stream: TurnstileStream, eps: float, master_seed: int = 0,
                       profile: str = "desk", eps0: float = EPS0,
                       bin_scale: int = THREEPASS_BIN_SCALE) -> EstimateReport:
    _check_replayable(stream)
    _check_eps(eps, eps0)
    coarse = _twopass(stream, THREEPASS_COARSE_EPS, derive_seed(master_seed, "coarse"), profile, BIN_SCALE)
    K = math.ceil(bin_scale / eps ** 2)
    E = coarse.value
    a = max(0, math.ceil(math.log2(E / K))) if E > 0 else 0
    last = LevelBinSketch(stream.n, stream.M, K, a, a, derive_seed(master_seed, "pass3"),
                          independence_for_eps(eps)).consume(stream)
    return EstimateReport(
        value=last.level_estimate(a),
        factor=1 + eps,
        success_prob=0.75,
        space=last.space(),
        details={"level": a, "K": K, "coarse": E, "coarse_space": coarse.space},
    )


# ---------------------------------------------------------------------------
# binary layout: magic, u16 version, u32 header length, JSON header, u64 LE counters


def _pack(header: dict, counters: np.ndarray) -> bytes:
    hb = json.dumps(header, sort_keys=True).encode()
    body = np.ascontiguousarray(counters, dtype="<u8").tobytes()
    return _MAGIC + struct.pack("<HI", _VERSION, len(hb)) + hb + body


def _unpack(blob: bytes, kind: str):
    if blob[:4] != _MAGIC:
        raise ValueError("not a serialized l0 sketch")
    version, hlen = struct.unpack_from("<HI", blob, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported sketch version {version}")
    start = 4 + struct.calcsize("<HI")
    header = json.loads(blob[start:start + hlen])
    if header.get("kind") != kind:
        raise ValueError(f"blob holds a {header.get('kind')!r} sketch, expected {kind!r}")
    counters = np.frombuffer(blob[start + hlen:], dtype="<u8")
    return header, counters
