"""Seeded limited-independence hash families over the Mersenne prime field 2^61 - 1.

A k-wise independent family is realized as a uniformly random polynomial of
degree at most k - 1 over GF(P), P = 2^61 - 1, reduced into the requested
range by ``mod``.  Everything is vectorized over numpy ``uint64`` arrays;
products are formed with a 31/30-bit limb split so nothing overflows.

Seeds: a single master seed derives every sub-seed through
``numpy.random.SeedSequence(master, spawn_key=path)``, where ``path`` is a
tuple of integers (string labels are mapped with CRC-32).  The derivation is
counter based: the same (master, path) always yields the same 64-bit seed.
"""

from __future__ import annotations

import math
import random
import zlib

import numpy as np

MERSENNE61 = (1 << 61) - 1
_P = np.uint64(MERSENNE61)
_MASK31 = np.uint64((1 << 31) - 1)
_MASK30 = np.uint64((1 << 30) - 1)
_S31 = np.uint64(31)
_S30 = np.uint64(30)
_S61 = np.uint64(61)

# deterministic Miller-Rabin witnesses, valid for every n < 2^64
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def _label(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def derive_seed(master: int, *path) -> int:
    """64-bit sub-seed for ``path`` under ``master`` (pure, order sensitive)."""
    key = tuple(_label(p) for p in path)
    ss = np.random.SeedSequence(int(master), spawn_key=key)
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def mulmod61(a, b):
    """Elementwise ``a * b mod (2^61 - 1)`` for uint64 arrays with entries < 2^61."""
    a = np.asarray(a, dtype=np.uint64)
    b = np.asarray(b, dtype=np.uint64)
    a_hi, a_lo = a >> _S31, a & _MASK31
    b_hi, b_lo = b >> _S31, b & _MASK31
    # 2^62 = 2 mod P
    hh = (a_hi * b_hi) << np.uint64(1)
    mid = a_hi * b_lo + a_lo * b_hi
    # mid * 2^31 = (mid >> 30) * 2^61 + (mid & (2^30-1)) * 2^31
    mid_r = (mid >> _S30) + ((mid & _MASK30) << _S31)
    s = hh + mid_r + a_lo * b_lo
    s = (s & _P) + (s >> _S61)
    return np.where(s >= _P, s - _P, s)


def addmod61(a, b):
    s = np.asarray(a, dtype=np.uint64) + np.asarray(b, dtype=np.uint64)
    return np.where(s >= _P, s - _P, s)


class _Horner:
    """Reusable buffers for repeated ``acc = acc * x + c`` steps with a fixed x."""

    def __init__(self, x: np.ndarray, shape):
        self.x_hi = np.broadcast_to(x >> _S31, shape)
        self.x_lo = np.broadcast_to(x & _MASK31, shape)
        self.t = [np.empty(shape, dtype=np.uint64) for _ in range(4)]

    def step(self, acc: np.ndarray, c) -> None:
        hi, lo, mid, s = self.t
        np.right_shift(acc, _S31, out=hi)
        np.bitwise_and(acc, _MASK31, out=lo)
        # mid = hi * x_lo + lo * x_hi, below 2^62
        np.multiply(hi, self.x_lo, out=mid)
        np.multiply(lo, self.x_hi, out=s)
        mid += s
        # 2^62 = 2 mod P, so hi * x_hi * 2^62 contributes 2 * hi * x_hi
        np.multiply(hi, self.x_hi, out=hi)
        hi <<= np.uint64(1)
        np.multiply(lo, self.x_lo, out=lo)
        lo += hi
        # mid * 2^31 = (mid >> 30) * 2^61 + (mid & (2^30-1)) * 2^31
        np.right_shift(mid, _S30, out=s)
        lo += s
        mid &= _MASK30
        mid <<= _S31
        lo += mid
        np.right_shift(lo, _S61, out=s)
        lo &= _P
        lo += s
        lo += c
        # lo < 2^62 now; two conditional subtractions finish the reduction
        np.right_shift(lo, _S61, out=s)
        lo &= _P
        lo += s
        acc[...] = np.where(lo >= _P, lo - _P, lo)


def poly_eval61(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate polynomials at points by Horner's rule over GF(2^61 - 1).

    ``coeffs`` has shape (k,) or (m, k) with the constant term last; ``x`` has
    shape (u,).  Returns shape (u,) or (m, u).
    """
    coeffs = np.asarray(coeffs, dtype=np.uint64)
    x = np.asarray(x, dtype=np.uint64) % _P
    if coeffs.ndim == 1:
        acc = np.full(x.shape, coeffs[0], dtype=np.uint64)
        horner = _Horner(x, acc.shape)
        for c in coeffs[1:]:
            horner.step(acc, c)
        return acc
    acc = np.repeat(coeffs[:, :1], x.shape[0], axis=1)
    horner = _Horner(x, acc.shape)
    for j in range(1, coeffs.shape[1]):
        horner.step(acc, coeffs[:, j:j + 1])
    return acc


def _check_domain(x, domain_size):
    arr = np.asarray(x)
    if arr.size and (arr.min() < 0 or arr.max() >= domain_size):
        raise ValueError(f"hash input outside domain [0, {domain_size})")
    return arr.astype(np.uint64)


class KWiseHash:
    """Random degree-(k-1) polynomial over GF(2^61 - 1), reduced into [0, range_size).

    Range reduction by ``mod`` leaves a nonuniformity of at most
    range_size / 2^61 per output value.
    """

    field_prime = MERSENNE61

    def __init__(self, k: int, domain_size: int, range_size: int, seed: int):
        if k < 2:
            raise ValueError("independence degree k must be at least 2")
        if not (1 <= domain_size <= MERSENNE61 and 1 <= range_size <= MERSENNE61):
            raise ValueError("domain and range must fit inside the field")
        self.k = int(k)
        self.domain_size = int(domain_size)
        self.range_size = int(range_size)
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        self.coeffs = rng.integers(0, MERSENNE61, size=self.k, dtype=np.uint64)

    def field_values(self, x) -> np.ndarray:
        return poly_eval61(self.coeffs, _check_domain(x, self.domain_size))

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        out = (self.field_values(np.atleast_1d(x)) % np.uint64(self.range_size)).astype(np.int64)
        return int(out[0]) if scalar else out

    def uniform(self, x) -> np.ndarray:
        """Map field values to the open interval (0, 1)."""
        return (self.field_values(np.atleast_1d(x)).astype(np.float64) + 0.5) / MERSENNE61

    @property
    def seed_bits(self) -> int:
        return self.k * 61


def kwise_eval(h: KWiseHash, x):
    return h(x)


class SignFamily:
    """4-wise independent +-1 signs: parity of a random cubic over the field."""

    def __init__(self, domain_size: int, seed: int, k: int = 4):
        self._h = KWiseHash(k, domain_size, MERSENNE61, seed)
        self.k = k
        self.domain_size = domain_size
        self.seed = seed

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        v = self._h.field_values(np.atleast_1d(x))
        out = 1 - 2 * (v & np.uint64(1)).astype(np.int64)
        return int(out[0]) if scalar else out

    @property
    def seed_bits(self) -> int:
        return self._h.seed_bits


def sign_eval(s: SignFamily, x):
    return s(x)


class HashBank:
    """``m`` independent k-wise polynomials evaluated together: ``bank(x)`` has shape (m, len(x))."""

    def __init__(self, m: int, k: int, domain_size: int, range_size: int, seed: int):
        if k < 2:
            raise ValueError("independence degree k must be at least 2")
        self.m, self.k = int(m), int(k)
        self.domain_size, self.range_size = int(domain_size), int(range_size)
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        self.coeffs = rng.integers(0, MERSENNE61, size=(self.m, self.k), dtype=np.uint64)

    def field_values(self, x) -> np.ndarray:
        return poly_eval61(self.coeffs, _check_domain(np.atleast_1d(x), self.domain_size))

    def __call__(self, x) -> np.ndarray:
        return (self.field_values(x) % np.uint64(self.range_size)).astype(np.int64)

    def signs(self, x) -> np.ndarray:
        return 1 - 2 * (self.field_values(x) & np.uint64(1)).astype(np.int64)

    def uniform(self, x) -> np.ndarray:
        return (self.field_values(x).astype(np.float64) + 0.5) / MERSENNE61

    @property
    def seed_bits(self) -> int:
        return self.m * self.k * 61


def independence_for_eps(eps: float) -> int:
    """k = max(2, ceil(2 ln(1/eps) / ln ln(1/eps + e))) for balls-into-bins hashing."""
    inv = 1.0 / eps
    return max(2, math.ceil(2.0 * math.log(inv) / math.log(math.log(inv + math.e))))


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin, exact for n < 2^64."""
    n = int(n)
    if n < 2:
        return False
    for q in _MR_BASES:
        if n % q == 0:
            return n == q
    if n >= 1 << 64:
        raise ValueError("primality test is only certified below 2^64")
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        y = pow(a, d, n)
        if y in (1, n - 1):
            continue
        for _ in range(r - 1):
            y = y * y % n
            if y == n - 1:
                break
        else:
            return False
    return True


def sample_prime(lo: int, hi: int, seed: int) -> int:
    """Uniformly random prime in [lo, hi] by rejection sampling."""
    lo, hi = int(lo), int(hi)
    if lo < 2 or hi <= lo:
        raise ValueError("need hi > lo >= 2")
    # certify the interval is nonempty before rejection sampling
    q = lo
    while q <= hi and not is_prime(q):
        q += 1
    if q > hi:
        raise ValueError(f"no prime in [{lo}, {hi}]")
    rng = random.Random(seed)
    while True:
        c = rng.randint(lo, hi)
        if is_prime(c):
            return c


def lsb(v) -> int:
    """Index of the least significant set bit of a positive integer."""
    v = int(v)
    if v <= 0:
        raise ValueError("lsb is defined for positive integers")
    return (v & -v).bit_length() - 1


def lsb_array(v: np.ndarray, zero_level: int) -> np.ndarray:
    """Vectorized lsb over nonnegative integers; zeros map to ``zero_level``."""
    v = np.asarray(v, dtype=np.uint64)
    low = v & (~v + np.uint64(1))
    out = np.full(v.shape, zero_level, dtype=np.int64)
    nz = v != 0
    out[nz] = np.round(np.log2(low[nz].astype(np.float64))).astype(np.int64)
    return out
