"""``coarse-sketch`` command line: ``run`` experiments and ``gen`` hard-instance streams."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import bench, instances

GEN_KINDS = ("coin", "disj", "augdisj", "augindex", "pw11")


def _shortcut_config(args) -> bench.ExperimentConfig:
    source: dict = {}
    if args.stream:
        source = {"kind": "file", "path": args.stream}
    n = args.n
    if args.l0_profile:
        name, params = "l0_rough", {"profile": args.l0_profile, "t": args.t}
        source = source or {"kind": "planted_l0", "n": n or 1 << 16, "ell0": args.ell0 or 4096}
    elif args.fp is not None:
        p = args.fp
        if p == 0:
            if args.passes not in (2, 3):
                raise SystemExit("--fp 0 (distinct elements) needs --passes 2 or 3")
            name = "l0_twopass" if args.passes == 2 else "l0_threepass"
            params = {"eps": args.eps or 0.1}
            source = source or {"kind": "planted_l0", "n": n or 1 << 20, "ell0": args.ell0 or 100_000}
        else:
            name = "pstable" if args.passes == 1 else "fp_twopass"
            params = {"p": p, "eps": args.eps or (0.2 if args.passes == 1 else 0.1)}
            source = source or {"kind": "random", "n": n or 1000, "M": 20}
    elif args.lp is not None:
        name, params = "lp_large", {"p": args.lp, "alpha": args.alpha or 4.0, "inner": args.inner}
        source = source or {"kind": "random", "n": n or 4096, "M": 100}
    elif args.cascaded is not None:
        p, q = args.cascaded
        name, params = "cascaded", {"p": p, "q": q, "alpha": args.alpha or 8.0}
        source = source or {"kind": "random", "n": n or 64, "d": n or 64, "M": 10}
    elif args.hh is not None:
        name, params = "heavy", {"k": args.hh, "alpha": args.alpha or 4.0}
        source = source or {"kind": "planted_heavy", "n": n or 1 << 14, "k": args.hh}
    elif args.schatten is not None:
        name, params = "schatten", {"p": args.schatten, "alpha": args.alpha or 2.0}
        source = source or {"kind": "random", "n": n or 128, "M": 10}
    else:
        raise SystemExit("run needs --config or one estimator shortcut flag")
    return bench.ExperimentConfig(name, params, source, args.trials, args.seed, args.out)


def load_config(path) -> bench.ExperimentConfig:
    with open(path, "rb") as fh:
        return bench.ExperimentConfig.from_dict(tomllib.load(fh))


def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else _shortcut_config(args)
    if args.out:
        cfg.output = args.out
    if args.trials_override is not None:
        cfg.trials = args.trials_override
    results = bench.run_experiment(cfg)
    text = bench.to_csv(results)
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)
    rate = bench.success_rate(results)
    ok = bench.meets_floor(cfg, results)
    floor = bench.get_estimator(cfg.estimator).floor
    print(f"{cfg.estimator}: success {rate:.3f} over {len(results)} trials (floor {floor:.2f}) "
          f"{'PASS' if ok else 'FAIL'}", file=sys.stderr)
    return 0 if ok else 1


def _write_comments(path, header: str, body, comments=()) -> None:
    text = "".join(f"# {c}\n" for c in comments) + header + "\n" + "".join(body)
    Path(path).write_text(text) if path else sys.stdout.write(text)


def _dump(stream, path, comments=()) -> None:
    body = (f"{i} {d}\n" for i, d in zip(stream.indices.tolist(), stream.deltas.tolist()))
    _write_comments(path, f"{stream.n} {stream.M}", body, comments)


def cmd_gen(args) -> int:
    seed = args.seed
    if args.kind == "coin":
        beta = args.beta if args.beta is not None else args.length ** (-1.0 / 3.0 - 0.05)
        spec = instances.CoinStreamSpec(args.length, beta, args.mode)
        _dump(instances.gen_coin_stream(spec, seed), args.out, [f"coin length={args.length} beta={beta:.6g} mode={args.mode}"])
    elif args.kind == "disj":
        s = args.s or math.ceil(math.log2(args.n))
        inst = instances.gen_disj(args.n, s, args.z or 0, seed)
        _dump(inst.stream(), args.out, [f"disj n={args.n} s={s} z={inst.z} I={inst.I}"])
    elif args.kind == "augdisj":
        s = args.s or math.ceil(math.log2(args.n))
        inst = instances.gen_augdisj(args.n, s, args.r, seed, z=args.z)
        _dump(inst.stream(), args.out, [f"augdisj n={args.n} s={s} r={args.r} T={inst.T} z={inst.z} I={inst.I}"])
    elif args.kind == "augindex":
        u = [int(c) for c in args.u]
        inst = instances.gen_augindex_l0(u, args.i_star, args.n, args.t)
        first, _ = inst.probes()
        body = [f"{i} {d}\n" for i, d in zip(first.indices.tolist(), first.deltas.tolist())]
        body.append("# probe: Bob's fill of segment i* follows\n")
        body += [f"{i} {d}\n" for i, d in zip(inst.bob_fill.indices.tolist(), inst.bob_fill.deltas.tolist())]
        _write_comments(args.out, f"{args.n} {inst.M}", body, [f"augindex u={args.u} i*={args.i_star} t={args.t}"])
    elif args.kind == "pw11":
        inst = instances.gen_pw11(args.n, args.k, seed)
        # the noisy signal is real; write it rounded at a fixed scale
        x = [round(v * args.scale) for v in inst.z.tolist()]
        M = max(1, max(abs(v) for v in x))
        body = (f"{i} {v}\n" for i, v in enumerate(x) if v)
        _write_comments(args.out, f"{args.n} {M}", body,
                        [f"pw11 n={args.n} k={args.k} scale={args.scale}", "support " + " ".join(map(str, inst.support.tolist()))])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coarse-sketch", description="Streaming sketch experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write CSV")
    run.add_argument("--config", help="TOML experiment config")
    run.add_argument("--out", help="CSV output path (default stdout)")
    run.add_argument("--trials", type=int, default=100, help="trials for shortcut flags")
    run.add_argument("--trials-override", type=int, help="override the config's trial count")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--n", type=int, help="dimension for the default generator")
    run.add_argument("--stream", help="read the input stream from a file instead of a generator")
    run.add_argument("--ell0", type=int, help="planted support size for distinct-element runs")
    run.add_argument("--t", type=int, default=4, help="levels of the rough distinct-element sketch")
    run.add_argument("--l0-profile", choices=("full", "desk"))
    run.add_argument("--fp", type=float, metavar="P")
    run.add_argument("--eps", type=float)
    run.add_argument("--passes", type=int, default=1, choices=(1, 2, 3))
    run.add_argument("--lp", type=float, metavar="P")
    run.add_argument("--alpha", type=float)
    run.add_argument("--inner", default="psamp", choices=("exact", "psamp", "ams"))
    run.add_argument("--cascaded", type=float, nargs=2, metavar=("P", "Q"))
    run.add_argument("--hh", type=int, metavar="K")
    run.add_argument("--schatten", type=float, metavar="P")
    run.set_defaults(func=cmd_run)

    gen = sub.add_parser("gen", help="write a hard-instance stream")
    gen.add_argument("--kind", required=True, choices=GEN_KINDS)
    gen.add_argument("--out", help="output path (default stdout)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--n", type=int, default=1 << 10)
    gen.add_argument("--length", type=int, default=10 ** 6, help="coin stream length")
    gen.add_argument("--beta", type=float, help="coin bias (default M^(-1/3-0.05))")
    gen.add_argument("--mode", default="plain", choices=instances.COIN_MODES)
    gen.add_argument("--s", type=int, help="players (default ceil(log2 n))")
    gen.add_argument("--z", type=int, default=None, choices=(0, 1))
    gen.add_argument("--r", type=int, default=3, help="layers for augdisj")
    gen.add_argument("--u", default="01", help="bit string for augindex (length t/8)")
    gen.add_argument("--i-star", type=int, default=1)
    gen.add_argument("--t", type=int, default=16)
    gen.add_argument("--k", type=int, default=64)
    gen.add_argument("--scale", type=float, default=10.0, help="rounding scale for pw11 output")
    gen.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
