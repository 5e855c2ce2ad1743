"""alpha-approximate l_p for p > 2 by reduction to a smaller norm.

For q <= p every x satisfies ||x||_p <= ||x||_q <= n^(1/q - 1/p) ||x||_p.
Choosing q with n^(1/q - 1/p) = alpha turns any constant-factor l_q
estimator into an alpha-approximation of l_p, and l_q is cheaper to sketch.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .lp import AMSSketch
from .space import EstimateReport, SpaceReport, integer_bits
from .stream import TurnstileStream, exact_moment


def derive_q(n: int, p: float, alpha: float, clamp: bool = False) -> float:
    """q = 1 / (1/p + log(alpha)/log(n)), so that n^(1/q - 1/p) = alpha."""
    if p <= 2:
        raise ValueError("the reduction is for p > 2")
    if alpha < 1:
        raise ValueError("approximation factor alpha below 1 is below the constant-factor regime")
    top = n ** (0.5 - 1.0 / p)
    if alpha > top * (1 + 1e-12):
        if clamp:
            return 2.0
        raise ValueError(f"alpha > n^(1/2-1/p) = {top:.4g} is the trivial regime (q would drop below 2)")
    if n < 2:
        return float(p)
    q = 1.0 / (1.0 / p + math.log(alpha) / math.log(n))
    return max(2.0, q)


class NormEstimator(ABC):
    """Streaming estimator of ||x||_q within a promised factor."""

    q: float
    factor: float
    success_prob: float

    @abstractmethod
    def update_batch(self, indices, deltas) -> None: ...

    @abstractmethod
    def estimate(self) -> float: ...

    def update(self, index: int, delta) -> None:
        self.update_batch([index], [delta])

    def consume(self, stream: TurnstileStream) -> "NormEstimator":
        self.update_batch(stream.indices, stream.deltas)
        return self

    def space(self) -> SpaceReport:
        return SpaceReport()


class ExactNorm(NormEstimator):
    def __init__(self, n: int, q: float, M: int = 1):
        self.q, self.factor, self.success_prob = float(q), 1.0, 1.0
        self.x = np.zeros(n, dtype=np.int64)
        self.M = M

    def update_batch(self, indices, deltas) -> None:
        np.add.at(self.x, np.asarray(indices, dtype=np.int64), np.asarray(deltas, dtype=np.int64))

    def estimate(self) -> float:
        return exact_moment(self.x, self.q)

    def space(self) -> SpaceReport:
        return SpaceReport(counter_bits=len(self.x) * integer_bits(self.M))


class AMSNorm(NormEstimator):
    def __init__(self, n: int, eps: float = 0.25, seed: int = 0):
        self.q, self.success_prob = 2.0, 0.9
        self.factor = 1.0 / (1.0 - eps)
        self.sketch = AMSSketch(n, eps, seed)

    def update_batch(self, indices, deltas) -> None:
        self.sketch.update_batch(indices, deltas)

    def estimate(self) -> float:
        return self.sketch.estimate()

    def space(self) -> SpaceReport:
        return self.sketch.space()


INNER_KINDS = ("exact", "psamp", "ams")


def make_inner(kind: str, n: int, q: float, seed: int = 0, M: int = 1) -> NormEstimator:
    if kind == "exact":
        return ExactNorm(n, q, M)
    if kind == "psamp":
        from .cascaded import PrecisionSamplingNorm

        if q == 2.0:
            return AMSNorm(n, seed=seed)
        return PrecisionSamplingNorm(n, q, seed)
    if kind == "ams":
        if q != 2.0:
            raise ValueError("the AMS inner estimator only handles q = 2")
        return AMSNorm(n, seed=seed)
    raise ValueError(f"unknown inner estimator {kind!r}; choose from {INNER_KINDS}")


@dataclass(frozen=True)
class LargePPlan:
    n: int
    p: float
    alpha: float
    q: float
    inner: str = "psamp"

    def build(self, seed: int = 0, M: int = 1) -> NormEstimator:
        return make_inner(self.inner, self.n, self.q, seed, M)


def plan_large_p(n: int, p: float, alpha: float, inner: str = "psamp") -> LargePPlan:
    q = derive_q(n, p, alpha, clamp=inner == "ams")
    return LargePPlan(n, p, alpha, q, inner)


def lp_large_estimate(stream: TurnstileStream, p: float, alpha: float, inner: str | NormEstimator = "psamp",
                      seed: int = 0) -> EstimateReport:
    """Z = factor * (inner estimate of ||x||_q): ||x||_p <= Z <= alpha * factor^2 * ||x||_p on success."""
    if isinstance(inner, NormEstimator):
        est = inner
        q = inner.q
    else:
        plan = plan_large_p(stream.n, p, alpha, inner)
        est = plan.build(seed, stream.M)
        q = plan.q
    est.consume(stream)
    Z = est.factor * est.estimate()
    return EstimateReport(
        value=float(Z),
        factor=alpha * est.factor ** 2,
        success_prob=est.success_prob,
        space=est.space(),
        details={"q": q},
    )


def combine_with_oracle(worst_case: float, learned: float) -> float:
    """Max of a guaranteed underestimate and an oracle estimate that underestimates when it fails."""
    return max(worst_case, learned)


def plan_space(n: int, p: float, alpha: float, seed: int = 0) -> SpaceReport:
    """Bits of the precision-sampling inner sketch for this (n, p, alpha)."""
    return plan_large_p(n, p, alpha).build(seed).space()

