"""Experiment harness: run an estimator over seeded trials and write a CSV report."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .hashing import derive_seed
from .space import EMPTY_SPACE, SpaceReport
from .stream import (MatrixStream, TurnstileStream, accumulate, exact_cascaded, exact_fp, exact_moment,
                     exact_schatten)

CSV_COLUMNS = ("trial", "seed", "exact", "estimate", "ratio", "success", "counter_bits", "seed_bits", "total_bits")
CSV_SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    estimator: str
    params: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict)
    trials: int = 10
    seed: int = 0
    output: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"estimator", "params", "source", "trials", "seed", "output"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        if "estimator" not in d:
            raise ValueError("config needs an 'estimator'")
        return cls(**d)


@dataclass
class TrialResult:
    trial: int
    seed: int
    exact: float
    estimate: float
    success: bool
    space: SpaceReport

    @property
    def ratio(self) -> float:
        return self.estimate / self.exact if self.exact else math.nan


# ---------------------------------------------------------------------------
# sources


def _planted_l0(n: int, ell0: int, M: int, rng) -> np.ndarray:
    x = np.zeros(n, dtype=np.int64)
    idx = rng.choice(n, size=min(ell0, n), replace=False)
    x[idx] = rng.integers(1, M + 1, size=len(idx)) * rng.choice([-1, 1], size=len(idx))
    return x


def _vector_source(src: dict, seed: int):
    """Return a TurnstileStream for the source spec."""
    kind = src.get("kind", "random")
    if kind == "file":
        return TurnstileStream.load(src["path"])
    rng = np.random.default_rng(derive_seed(seed, "source"))
    n = int(src.get("n", 1024))
    M = int(src.get("M", 100))
    if kind == "random":
        x = rng.integers(-M, M + 1, n)
    elif kind == "planted_l0":
        x = _planted_l0(n, int(src.get("ell0", n // 16)), M, rng)
    elif kind == "binary":
        x = _planted_l0(n, int(src.get("ones", n // 10)), 1, rng)
        x = np.abs(x)
        M = 1
    elif kind == "planted_heavy":
        from .instances import gen_planted_heavy

        ph = gen_planted_heavy(n, int(src.get("k", 64)), derive_seed(seed, "source"))
        return ph.stream(derive_seed(seed, "order"))
    else:
        raise ValueError(f"unknown vector source {kind!r}; choose from {sorted(VECTOR_SOURCES)}")
    # with churn, every coordinate is first over-inserted and then corrected
    stream = TurnstileStream.from_vector(x, max(M, 1), seed=derive_seed(seed, "order"))
    churn = int(src.get("churn", 0))
    if churn:
        extra = rng.integers(0, n, churn)
        noise = rng.integers(1, max(M, 2), churn)
        stream = TurnstileStream(n, stream.M, np.concatenate([extra, stream.indices, extra]),
                                 np.concatenate([noise, stream.deltas, -noise]))
    return stream


def _matrix_source(src: dict, seed: int) -> MatrixStream:
    kind = src.get("kind", "random")
    if kind == "file":
        return MatrixStream.load(src["path"])
    rng = np.random.default_rng(derive_seed(seed, "source"))
    n = int(src.get("n", 64))
    d = int(src.get("d", n))
    M = int(src.get("M", 10))
    if kind == "random":
        a = rng.integers(-M, M + 1, (n, d))
    elif kind == "identity":
        a = np.eye(n, d, dtype=np.int64)
    elif kind == "rank1":
        a = np.outer(rng.integers(-M, M + 1, n), rng.integers(-M, M + 1, d))
    elif kind == "sparse_rows":
        a = np.zeros((n, d), dtype=np.int64)
        rows = rng.choice(n, size=max(1, n // 8), replace=False)
        a[rows] = rng.integers(-M, M + 1, (len(rows), d))
    else:
        raise ValueError(f"unknown matrix source {kind!r}; choose from {sorted(MATRIX_SOURCES)}")
    return MatrixStream.from_matrix(a, seed=derive_seed(seed, "order"))


VECTOR_SOURCES = {"random", "planted_l0", "binary", "planted_heavy", "file"}
MATRIX_SOURCES = {"random", "identity", "rank1", "sparse_rows", "file"}


# ---------------------------------------------------------------------------
# estimators: each maps (params, stream, seed) to (exact, estimate, success, space)


def _within(est: float, exact: float, eps: float) -> bool:
    return abs(est - exact) <= eps * exact


def _sandwich(est: float, exact: float, factor: float) -> bool:
    return exact * (1 - 1e-12) <= est <= factor * exact * (1 + 1e-12)


def _run_l0_rough(prm, stream, seed):
    from .l0 import integer_root, rough_estimate

    t = int(prm.get("t", 4))
    r = rough_estimate(stream, t, prm.get("profile", "full"), seed)
    exact = exact_moment(accumulate(stream), 0)
    factor = integer_root(stream.n, t)
    ok = exact == r.value == 0 or (exact > 0 and r.value > 0 and max(r.value / exact, exact / r.value) <= factor)
    return exact, r.value, ok, r.space


def _run_l0_passes(passes):
    def run(prm, stream, seed):
        from .l0 import threepass_estimate, twopass_estimate

        eps = float(prm.get("eps", 0.1))
        fn = twopass_estimate if passes == 2 else threepass_estimate
        r = fn(stream, eps, seed, prm.get("profile", "desk"))
        exact = exact_moment(accumulate(stream), 0)
        return exact, r.value, _within(r.value, exact, eps), r.space
    return run


def _run_pstable(prm, stream, seed):
    from .lp import norm_sketch

    p, eps = float(prm.get("p", 1.0)), float(prm.get("eps", 0.2))
    sk = norm_sketch(stream.n, stream.M, p, eps, seed).consume(stream)
    exact = exact_moment(accumulate(stream), p)
    est = sk.estimate()
    return exact, est, _within(est, exact, eps), sk.space()


def _run_fp_twopass(prm, stream, seed):
    from .lp import fp_twopass_estimate

    p, eps = float(prm.get("p", 1.0)), float(prm.get("eps", 0.1))
    r = fp_twopass_estimate(stream, p, eps, seed)
    exact = exact_fp(accumulate(stream), p)
    return exact, r.value, _within(r.value, exact, eps), r.space


def _run_lp_large(prm, stream, seed):
    from .lp_large import lp_large_estimate

    p, alpha = float(prm.get("p", 4.0)), float(prm.get("alpha", 4.0))
    r = lp_large_estimate(stream, p, alpha, prm.get("inner", "psamp"), seed)
    exact = exact_moment(accumulate(stream), p)
    # the inner estimator is a factor-2 approximation, hence 2 alpha
    return exact, r.value, _sandwich(r.value, exact, 2 * alpha), r.space


def _run_heavy(prm, stream, seed):
    from .heavy import HeavyHitterSketch, classify

    k, alpha = int(prm.get("k", 64)), float(prm.get("alpha", 4.0))
    sk = HeavyHitterSketch(stream.n, k, alpha, seed, M=stream.M).consume(stream)
    rep = sk.report()
    must, exclude, _ = classify(accumulate(stream), k, alpha)
    ok = must <= rep.set and not (rep.set & exclude)
    return float(len(must)), float(len(rep.indices)), ok, sk.space()


def _run_cascaded(prm, a: MatrixStream, seed):
    from .cascaded import CascadedSketch

    p, q, alpha = float(prm.get("p", 3.0)), float(prm.get("q", 4.0)), float(prm.get("alpha", 8.0))
    n, d = a.shape
    sk = CascadedSketch(n, d, p, q, alpha, seed).consume(a)
    est = sk.estimate()
    exact = exact_cascaded(a.dense(), p, q)
    return exact, est, _sandwich(est, exact, alpha), sk.space()


def _run_schatten(prm, a: MatrixStream, seed):
    from .schatten import plan_schatten, schatten_estimate, square_dim, with_gamma

    p, alpha = float(prm.get("p", 4.0)), float(prm.get("alpha", 2.0))
    n, d = a.shape
    plan = with_gamma(plan_schatten(square_dim(n, d), p, alpha), seed=int(prm.get("calibration_seed", 0)))
    r = schatten_estimate(a, p, alpha, seed, plan)
    exact = exact_schatten(a.dense(), p)
    return exact, r.value, _sandwich(r.value, exact, alpha), r.space


@dataclass(frozen=True)
class EstimatorSpec:
    run: Callable
    matrix: bool
    floor: float  # minimum success rate for the run to count as passing


ESTIMATORS: dict[str, EstimatorSpec] = {
    "l0_rough": EstimatorSpec(_run_l0_rough, False, 0.85),
    "l0_twopass": EstimatorSpec(_run_l0_passes(2), False, 0.70),
    "l0_threepass": EstimatorSpec(_run_l0_passes(3), False, 0.65),
    "pstable": EstimatorSpec(_run_pstable, False, 0.85),
    "fp_twopass": EstimatorSpec(_run_fp_twopass, False, 0.80),
    "lp_large": EstimatorSpec(_run_lp_large, False, 0.85),
    "heavy": EstimatorSpec(_run_heavy, False, 0.90),
    "cascaded": EstimatorSpec(_run_cascaded, True, 0.60),
    "schatten": EstimatorSpec(_run_schatten, True, 0.60),
}


def get_estimator(name: str) -> EstimatorSpec:
    try:
        return ESTIMATORS[name]
    except KeyError:
        raise ValueError(f"unknown estimator {name!r}; choose from {sorted(ESTIMATORS)}") from None


def run_trial(cfg: ExperimentConfig, trial: int) -> TrialResult:
    spec = get_estimator(cfg.estimator)
    seed = derive_seed(cfg.seed, "trial", trial)
    source_seed = derive_seed(seed, "source") if cfg.source.get("vary", True) else derive_seed(cfg.seed, "source")
    data = _matrix_source(cfg.source, source_seed) if spec.matrix else _vector_source(cfg.source, source_seed)
    exact, est, ok, space = spec.run(cfg.params, data, derive_seed(seed, "sketch"))
    return TrialResult(trial, seed, float(exact), float(est), bool(ok), space or EMPTY_SPACE)


def run_experiment(cfg: ExperimentConfig) -> list[TrialResult]:
    spec = get_estimator(cfg.estimator)  # fail fast on a bad id, even for zero trials
    if spec.matrix:
        if cfg.source.get("kind", "random") not in MATRIX_SOURCES:
            raise ValueError(f"unknown matrix source {cfg.source.get('kind')!r}; choose from {sorted(MATRIX_SOURCES)}")
    elif cfg.source.get("kind", "random") not in VECTOR_SOURCES:
        raise ValueError(f"unknown vector source {cfg.source.get('kind')!r}; choose from {sorted(VECTOR_SOURCES)}")
    return sorted((run_trial(cfg, t) for t in range(cfg.trials)), key=lambda r: r.trial)


def _fmt(v: float) -> str:
    return repr(float(v))


def to_csv(results: list[TrialResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        w.writerow([r.trial, r.seed, _fmt(r.exact), _fmt(r.estimate), _fmt(r.ratio), int(r.success),
                    r.space.counter_bits, r.space.hash_seed_bits, r.space.total_bits])
    return buf.getvalue()


def write_csv(results: list[TrialResult], path) -> None:
    Path(path).write_text(to_csv(results))


def success_rate(results: list[TrialResult]) -> float:
    return float(np.mean([r.success for r in results])) if results else math.nan


def meets_floor(cfg: ExperimentConfig, results: list[TrialResult]) -> bool:
    if not results:
        return True
    return success_rate(results) >= get_estimator(cfg.estimator).floor
