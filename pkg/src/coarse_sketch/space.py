"""Space accounting and the common estimate record."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class SpaceReport:
    """Bits used by a sketch.  Hash seeds (the random tape) are reported separately from state."""

    counter_bits: int = 0
    hash_seed_bits: int = 0
    auxiliary_bits: int = 0

    @property
    def total_bits(self) -> int:
        return self.counter_bits + self.hash_seed_bits + self.auxiliary_bits

    def __add__(self, other: "SpaceReport") -> "SpaceReport":
        return SpaceReport(
            self.counter_bits + other.counter_bits,
            self.hash_seed_bits + other.hash_seed_bits,
            self.auxiliary_bits + other.auxiliary_bits,
        )


EMPTY_SPACE = SpaceReport()

# real-valued counters are stored as float64 words
WORD_BITS = 64


def modulus_bits(p: int) -> int:
    """Bits to store one residue mod p, i.e. ceil(log2 p)."""
    return max(1, math.ceil(math.log2(p))) if p > 1 else 1


def integer_bits(bound: int) -> int:
    """Bits for a signed integer of magnitude at most ``bound``."""
    return int(bound).bit_length() + 1


def space_report(sketch) -> SpaceReport:
    """SpaceReport of anything exposing ``space()``; objects without state report nothing."""
    fn = getattr(sketch, "space", None)
    if fn is None:
        return EMPTY_SPACE
    return fn()


@dataclass
class EstimateReport:
    value: float
    factor: float
    success_prob: float
    space: SpaceReport = field(default_factory=SpaceReport)
    details: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return float(self.value)
