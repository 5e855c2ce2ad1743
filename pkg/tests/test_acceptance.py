"""Acceptance criteria.  Each test prints one PASS/FAIL line and then asserts.

Run alone with ``pytest -m acceptance -v``.  Tolerances below are fixed and
must not be tuned to make a run pass.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from coarse_sketch.cascaded import CascadedSketch, FqPrecisionSketch
from coarse_sketch.heavy import CountSketchTable, heavy_hitters
from coarse_sketch.instances import (augdisj_gap, coin_distinguisher, gen_augindex_l0, gen_planted_heavy, gen_pw11,
                                     pw11_alpha)
from coarse_sketch.l0 import (LevelBinSketch, RoughL0Sketch, TwoPassL0Sketch, plan_twopass, rough_config,
                              rough_estimate, threepass_estimate, twopass_estimate)
from coarse_sketch.lp import AMSSketch, PStableSketch, fp_twopass_estimate, norm_sketch
from coarse_sketch.lp_large import derive_q, lp_large_estimate, plan_space
from coarse_sketch.schatten import BilinearSketchState, plan_schatten, schatten_estimate, with_gamma
from coarse_sketch.stream import (MatrixStream, TurnstileStream, accumulate, exact_cascaded, exact_moment,
                                  exact_schatten)

pytestmark = pytest.mark.acceptance

# 1 sandwich
SANDWICH_VECTORS = 1000
SANDWICH_N = 1024
SANDWICH_P = (2.5, 3.0, 4.0, 6.0)
SANDWICH_ALPHA_STEPS = 6
FLOAT_SLACK = 1e-12  # relative slack for float rounding at equality cases
# 2 rough l0
ROUGH_N, ROUGH_T, ROUGH_TRIALS, ROUGH_FLOOR = 1 << 16, 4, 200, 0.85
ROUGH_L0 = (1, 1 << 6, 1 << 12, 1 << 16)
# 3 multi-pass l0
MP_N, MP_L0, MP_TRIALS = 1 << 20, 100_000, 200
TWOPASS_EPS, TWOPASS_FLOOR = 0.1, 0.70
THREEPASS_EPS, THREEPASS_FLOOR = 0.05, 0.65
# 4 p-stable / AMS and two-pass F_p
PSTABLE_EPS, PSTABLE_P, PSTABLE_TRIALS, PSTABLE_FLOOR = 0.2, (0.5, 1.0, 2.0), 200, 0.85
PSTABLE_N, PSTABLE_M = 1000, 20
FP_EPS, FP_N, FP_L1, FP_P, FP_TRIALS, FP_FLOOR = 0.1, 100_000, 10_000, 1.0, 200, 0.80
# 5 lp_large
LPL_N, LPL_P, LPL_ALPHA, LPL_TRIALS, LPL_FLOOR, LPL_WINDOW = 4096, 4.0, 4.0, 200, 0.85, 8.0
# 6 heavy hitters
HH_K, HH_N, HH_TRIALS, HH_FLOOR_COUNT = 64, 1 << 14, 100, 90
PW11_TRIALS, PW11_FLOOR = 90, 2 / 3
# 7 schatten
SCH_N, SCH_P, SCH_ALPHA, SCH_TRIALS, SCH_FLOOR = 128, 4, 2.0, 200, 0.60
# 8 cascaded
CAS_SHAPE, CAS_P, CAS_Q, CAS_ALPHA, CAS_TRIALS, CAS_FLOOR = (64, 64), 3.0, 4.0, 8.0, 200, 0.60
# 9 hard instances
COIN_M, COIN_BETA_EXP, COIN_TRIALS, COIN_FLOOR = 10 ** 6, -0.383, 100, 2 / 3
AUGIDX_N, AUGIDX_T = 1 << 20, 16
# 10 space scaling
SPACE_TOL = 0.10
# 11 merge
MERGE_PAIRS, MERGE_RTOL = 100, 1e-9


def emit(capsys, number: int, title: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}")


def planted(n, ell0, rng, M=100):
    x = np.zeros(n, dtype=np.int64)
    idx = rng.choice(n, size=ell0, replace=False)
    x[idx] = rng.integers(1, M + 1, ell0) * rng.choice([-1, 1], ell0)
    return x


def random_pair(rng, n, count=60, M=9):
    mk = lambda: TurnstileStream(n, 10 ** 6, rng.integers(0, n, count), rng.integers(-M, M + 1, count))
    return mk(), mk()


# ---------------------------------------------------------------------------


def test_01_sandwich(capsys):
    rng = np.random.default_rng(1)
    n = SANDWICH_N
    kinds = ("random", "one_sparse", "flat", "geometric")
    failures, checks = 0, 0
    for v in range(SANDWICH_VECTORS):
        kind = kinds[v % 4]
        if kind == "random":
            x = rng.integers(-1000, 1001, n)
        elif kind == "one_sparse":
            x = np.zeros(n, dtype=np.int64)
            x[rng.integers(n)] = rng.integers(1, 1000)
        elif kind == "flat":
            x = np.full(n, int(rng.integers(1, 50)), dtype=np.int64)
        else:
            x = np.floor(1000 * rng.uniform(0.5, 0.99) ** np.arange(n)).astype(np.int64)
        for p in SANDWICH_P:
            top = n ** (0.5 - 1 / p)
            lp = exact_moment(x, p)
            for alpha in np.linspace(1, top, SANDWICH_ALPHA_STEPS):
                q = derive_q(n, p, float(alpha))
                lq = exact_moment(x, q)
                checks += 1
                failures += not (lp <= lq * (1 + FLOAT_SLACK) and lq <= alpha * lp * (1 + FLOAT_SLACK))
    ok = failures == 0
    emit(capsys, 1, "sandwich", ok, f"{failures} failures in {checks} checks")
    assert ok


def test_02_rough_l0(capsys):
    rng = np.random.default_rng(2)
    factor = ROUGH_N ** (1 / ROUGH_T)
    rates = {}
    for ell0 in ROUGH_L0:
        ok = 0
        for trial in range(ROUGH_TRIALS):
            s = TurnstileStream.from_vector(planted(ROUGH_N, ell0, rng), 100, seed=trial)
            v = rough_estimate(s, ROUGH_T, "full", seed=trial).value
            ok += max(v / ell0, ell0 / v) <= factor
        rates[ell0] = ok / ROUGH_TRIALS
    ok = all(r >= ROUGH_FLOOR for r in rates.values())
    emit(capsys, 2, "rough l0", ok, " ".join(f"l0={k}:{v:.3f}" for k, v in rates.items()) + f" (floor {ROUGH_FLOOR})")
    assert ok


def test_03_multipass_l0(capsys):
    rng = np.random.default_rng(3)
    two = three = 0
    for trial in range(MP_TRIALS):
        s = TurnstileStream.from_vector(planted(MP_N, MP_L0, rng), 100, seed=trial)
        two += abs(twopass_estimate(s, TWOPASS_EPS, trial).value - MP_L0) <= TWOPASS_EPS * MP_L0
        three += abs(threepass_estimate(s, THREEPASS_EPS, trial).value - MP_L0) <= THREEPASS_EPS * MP_L0
    r2, r3 = two / MP_TRIALS, three / MP_TRIALS
    ok = r2 >= TWOPASS_FLOOR and r3 >= THREEPASS_FLOOR
    emit(capsys, 3, "two/three-pass l0", ok,
         f"two-pass {r2:.3f} (floor {TWOPASS_FLOOR}), three-pass {r3:.3f} (floor {THREEPASS_FLOOR})")
    assert ok


def test_04_pstable_and_fp(capsys):
    rng = np.random.default_rng(4)
    rates = {}
    for p in PSTABLE_P:
        ok = 0
        for trial in range(PSTABLE_TRIALS):
            x = rng.integers(-PSTABLE_M, PSTABLE_M + 1, PSTABLE_N)
            s = TurnstileStream.from_vector(x, PSTABLE_M, seed=trial)
            est = norm_sketch(PSTABLE_N, PSTABLE_M, p, PSTABLE_EPS, trial).consume(s).estimate()
            ok += abs(est - exact_moment(x, p)) <= PSTABLE_EPS * exact_moment(x, p)
        rates[p] = ok / PSTABLE_TRIALS
    fp_ok = 0
    for trial in range(FP_TRIALS):
        x = np.zeros(FP_N, dtype=np.int64)
        x[rng.choice(FP_N, FP_L1, replace=False)] = 1
        s = TurnstileStream.from_vector(x, 1, seed=trial)
        fp_ok += abs(fp_twopass_estimate(s, FP_P, FP_EPS, trial).value - FP_L1) <= FP_EPS * FP_L1
    fp_rate = fp_ok / FP_TRIALS
    ok = all(r >= PSTABLE_FLOOR for r in rates.values()) and fp_rate >= FP_FLOOR
    emit(capsys, 4, "p-stable/AMS + two-pass F_p", ok,
         " ".join(f"p={k}:{v:.3f}" for k, v in rates.items()) + f" (floor {PSTABLE_FLOOR}); "
         f"two-pass {fp_rate:.3f} (floor {FP_FLOOR})")
    assert ok


def test_05_lp_large(capsys):
    rng = np.random.default_rng(5)
    n = LPL_N
    ok = 0
    for trial in range(LPL_TRIALS):
        kind = trial % 4
        if kind == 0:
            x = rng.integers(-100, 101, n)
        elif kind == 1:
            x = np.zeros(n, dtype=np.int64)
            x[rng.choice(n, 32, replace=False)] = rng.integers(1, 100, 32)
        elif kind == 2:
            x = np.floor(1000 / np.arange(1, n + 1) ** 0.8).astype(np.int64)[rng.permutation(n)]
        else:
            x = rng.integers(-3, 4, n)
            x[rng.integers(n)] = 500
        s = TurnstileStream.from_vector(x, int(np.abs(x).max()), seed=trial)
        Z = lp_large_estimate(s, LPL_P, LPL_ALPHA, "psamp", trial).value
        lp = exact_moment(x, LPL_P)
        ok += lp <= Z <= LPL_WINDOW * lp
    rate = ok / LPL_TRIALS
    emit(capsys, 5, "lp_large", rate >= LPL_FLOOR, f"{rate:.3f} in [|x|_p, {LPL_WINDOW}|x|_p] (floor {LPL_FLOOR})")
    assert rate >= LPL_FLOOR


def test_06_heavy_hitters(capsys):
    planted_ok = 0
    for trial in range(HH_TRIALS):
        ph = gen_planted_heavy(HH_N, HH_K, trial)
        planted_ok += heavy_hitters(ph.stream(trial), HH_K, 4.0, trial).set == ph.planted
    alpha = pw11_alpha(HH_N, HH_K)
    pw_ok = 0
    for trial in range(PW11_TRIALS):
        inst = gen_pw11(HH_N, HH_K, trial)
        pw_ok += heavy_hitters(inst.z, HH_K, alpha, trial).set == set(inst.support.tolist())
    pw_rate = pw_ok / PW11_TRIALS
    ok = planted_ok >= HH_FLOOR_COUNT and pw_rate >= PW11_FLOOR
    emit(capsys, 6, "heavy hitters", ok,
         f"planted {planted_ok}/{HH_TRIALS} (floor {HH_FLOOR_COUNT}); PW11 alpha={alpha:.2f} {pw_rate:.3f} (floor 2/3)")
    assert ok


def test_07_schatten(capsys):
    rng = np.random.default_rng(7)
    plan = with_gamma(plan_schatten(SCH_N, SCH_P, SCH_ALPHA))
    rates = {}
    for kind in ("identity", "rank1", "random"):
        ok = 0
        for trial in range(SCH_TRIALS):
            if kind == "identity":
                a = np.eye(SCH_N)
            elif kind == "rank1":
                a = np.outer(rng.standard_normal(SCH_N), rng.standard_normal(SCH_N))
            else:
                a = rng.standard_normal((SCH_N, SCH_N))
            est = schatten_estimate(a, SCH_P, SCH_ALPHA, 10_000 + trial, plan).value
            truth = exact_schatten(a, SCH_P)
            ok += truth <= est <= SCH_ALPHA * truth
        rates[kind] = ok / SCH_TRIALS
    ok = all(r >= SCH_FLOOR for r in rates.values())
    emit(capsys, 7, "schatten", ok, " ".join(f"{k}:{v:.3f}" for k, v in rates.items()) +
         f" (floor {SCH_FLOOR}; t={plan.t}, gamma={plan.gamma:.3f})")
    assert ok


def test_08_cascaded(capsys):
    rng = np.random.default_rng(8)
    n, d = CAS_SHAPE
    ok = 0
    for trial in range(CAS_TRIALS):
        kind = trial % 4
        if kind == 0:
            a = rng.integers(-10, 11, (n, d))
        elif kind == 1:
            a = np.zeros((n, d), dtype=np.int64)
            a[rng.integers(n)] = rng.integers(1, 20, d)
        elif kind == 2:
            a = rng.integers(-2, 3, (n, d))
            a[rng.integers(n)] *= 30
        else:
            a = (rng.random((n, d)) < 0.05) * rng.integers(-20, 21, (n, d))
        est = CascadedSketch(n, d, CAS_P, CAS_Q, CAS_ALPHA, trial).consume(MatrixStream.from_matrix(a)).estimate()
        truth = exact_cascaded(a, CAS_P, CAS_Q)
        ok += truth <= est <= CAS_ALPHA * truth
    rate = ok / CAS_TRIALS
    emit(capsys, 8, "cascaded", rate >= CAS_FLOOR, f"{rate:.3f} (floor {CAS_FLOOR})")
    assert rate >= CAS_FLOOR


def test_09_hard_instances(capsys):
    coin = coin_distinguisher(COIN_M, COIN_M ** COIN_BETA_EXP, COIN_TRIALS, seed=9)
    n = 1024
    gap = augdisj_gap(n, math.ceil(4 * n ** 0.25), 3, 4.0, 50, seed=9)
    aug_ok = True
    for u in ((0, 0), (0, 1), (1, 0), (1, 1)):
        for i_star in (1, 2):
            z1, z2 = (exact_moment(accumulate(s), 0) for s in gen_augindex_l0(list(u), i_star, AUGIDX_N, AUGIDX_T).probes())
            if u[i_star - 1] == 0:
                aug_ok &= z2 > 0 and (z1 == 0 or z2 / z1 >= 0.5 * AUGIDX_N ** (6 / AUGIDX_T))
            else:
                aug_ok &= z2 == z1
    ok = coin.accuracy >= COIN_FLOOR and gap.passed and aug_ok
    emit(capsys, 9, "hard instances", ok,
         f"coin accuracy {coin.accuracy:.3f} (floor 2/3); augdisj yes_ok={gap.yes_ok} "
         f"no violations {gap.no_violations}/{gap.no_trials}; augindex ratios {'ok' if aug_ok else 'violated'}")
    assert ok


def _within(values, tol):
    return max(values) <= (1 + tol) * min(values)


def test_10_space_scaling(capsys):
    rough = [RoughL0Sketch(1 << 16, 100, rough_config("full", t=t), 0).space().total_bits / t for t in (2, 4, 8, 16)]
    pst = [PStableSketch(1000, 20, 1.0, e).space().total_bits * e ** 2 for e in (0.4, 0.2, 0.1, 0.05)]
    # alpha below n^(1/2 - 1/p) = 8 keeps q above 2
    lpl = [plan_space(4096, 4.0, a).total_bits * a ** 2 for a in (1.0, 2.0, 4.0, 6.0)]
    parts = {"rough l0 / t": rough, "p-stable * eps^2": pst, "lp_large * alpha^2": lpl}
    ok = all(_within(v, SPACE_TOL) for v in parts.values())
    emit(capsys, 10, "space scaling", ok,
         "; ".join(f"{k} spread {max(v) / min(v) - 1:.4f}" for k, v in parts.items()) + f" (tol {SPACE_TOL})")
    assert ok


def _merge_cases(rng):
    n = 256
    cfg = rough_config("desk", t=2)
    plan = plan_twopass(0.3, 100, n, 2)
    sch = replace(plan_schatten(16, 4, 2), gamma=1.0)
    vec = {
        "rough l0": (lambda: RoughL0Sketch(n, 10 ** 6, cfg, 1), lambda s: s.counters, True),
        "level bins": (lambda: LevelBinSketch(n, 10 ** 6, 64, 0, 4, 2), lambda s: s.counters, True),
        "two-pass l0": (lambda: TwoPassL0Sketch(n, 10 ** 6, plan, 3),
                        lambda s: np.concatenate([s.window.counters.ravel(), s.small.counters.ravel()]), True),
        "p-stable": (lambda: PStableSketch(n, 10 ** 6, 1.3, 0.5, 4), lambda s: s.y, False),
        "ams": (lambda: AMSSketch(n, 0.5, 5), lambda s: s.y, False),
        "countsketch": (lambda: CountSketchTable(n, 32, seed=6), lambda s: s.table, True),
        "fq precision": (lambda: FqPrecisionSketch(n, 4.0, 7, reps=2),
                         lambda s: np.concatenate([p.table.ravel() for p in s.parts]), False),
    }
    mat = {
        "cascaded": (lambda: CascadedSketch(16, 16, 3, 4, 8, 8, reps=2),
                     lambda s: np.concatenate([p.table.ravel() for p in s.parts]), False),
        "schatten": (lambda: BilinearSketchState(sch, 9), lambda s: s.S, False),
    }
    return vec, mat


def _feed(sk, stream):
    if isinstance(stream, MatrixStream):
        sk.update_batch(stream.rows, stream.cols, stream.deltas)
    else:
        sk.update_batch(stream.indices, stream.deltas)
    return sk


def test_11_merge(capsys):
    rng = np.random.default_rng(11)
    vec, mat = _merge_cases(rng)
    failures = {}
    for group, make_pair in ((vec, lambda: random_pair(rng, 256)),
                             (mat, lambda: tuple(MatrixStream(16, 9, rng.integers(0, 16, 40), rng.integers(0, 16, 40),
                                                              rng.integers(-9, 10, 40)) for _ in range(2)))):
        for name, (make, state, exact) in group.items():
            bad = 0
            for _ in range(MERGE_PAIRS):
                a, b = make_pair()
                merged = state(_feed(make(), a).merge(_feed(make(), b)))
                whole = state(_feed(make(), a.concat(b)))
                if exact:
                    bad += not np.array_equal(merged, whole)
                else:
                    bad += not np.allclose(merged, whole, rtol=MERGE_RTOL, atol=MERGE_RTOL * max(1.0, np.abs(whole).max()))
            failures[name] = bad
    ok = sum(failures.values()) == 0
    emit(capsys, 11, "merge", ok, ", ".join(f"{k}:{v}" for k, v in failures.items()) + f" failures of {MERGE_PAIRS} pairs")
    assert ok
