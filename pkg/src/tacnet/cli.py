"""Command line: gen, solve, eval, dot, bench."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .model import load_instance, save_instance
from .report import (
    benchmark,
    design_json,
    design_throughputs,
    dump_json,
    evaluation_report,
    export_dot,
    generate_instance,
    load_design,
    run_report,
    write_summary,
    write_trace_csv,
    version,
    PRNG,
)
from .search import ALGORITHMS, DEFAULT_KAPPA, solve


def _limits(p: argparse.ArgumentParser) -> None:
    p.add_argument("--time-limit-s", type=float, default=None, help="wall-clock limit in seconds")
    p.add_argument("--iterations", type=int, default=None, help="iteration budget (reproducible runs)")
    p.add_argument("--lambda", dest="lam", type=int, default=None, help="TABU2 restart period (default n)")
    p.add_argument("--kappa", type=int, default=DEFAULT_KAPPA, help="TBS pool width")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tacnet", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {version()}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a seeded synthetic instance")
    g.add_argument("-n", type=int, required=True)
    g.add_argument("--area", type=float, default=5000.0, help="side of the square in meters")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="run one solver on an instance")
    s.add_argument("instance")
    s.add_argument("--algorithm", choices=ALGORITHMS, default="tabu2")
    _limits(s)
    s.add_argument("--no-aspiration", action="store_true", help="never admit tabu moves")
    s.add_argument("--per-edge-frequencies", action="store_true")
    s.add_argument("--audit", action="store_true", help="check every visited topology and incumbent")
    s.add_argument("--out", required=True, help="report JSON; the design and trace CSV are written beside it")

    e = sub.add_parser("eval", help="re-score a design (or a report containing one)")
    e.add_argument("design")
    e.add_argument("instance")
    e.add_argument("--out", default=None)

    d = sub.add_parser("dot", help="export a design as Graphviz DOT")
    d.add_argument("design")
    d.add_argument("--instance", default=None, help="compute throughput labels from this instance")
    d.add_argument("--out", default=None)

    b = sub.add_parser("bench", help="run an instance x algorithm matrix")
    b.add_argument("instances", nargs="+")
    b.add_argument("--algorithm", action="append", choices=ALGORITHMS, default=None,
                   help="repeatable; default all")
    b.add_argument("--repeats", type=int, default=5)
    _limits(b)
    b.add_argument("--out", required=True, help="output prefix; writes PREFIX.csv and PREFIX.json")
    return ap


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gen(args) -> int:
    inst = generate_instance(args.n, args.area, args.seed)
    save_instance(inst, args.out)
    return 0


def cmd_solve(args) -> int:
    if args.time_limit_s is None and args.iterations is None:
        raise SystemExit("solve: give --time-limit-s and/or --iterations")
    inst = load_instance(args.instance)
    res = solve(inst, args.algorithm, time_limit_s=args.time_limit_s, iterations=args.iterations,
                lam=args.lam, kappa=args.kappa, aspiration=not args.no_aspiration,
                per_edge=args.per_edge_frequencies, audit=args.audit)
    report = run_report(inst, res, args.seed)
    out = Path(args.out)
    dump_json(report, out)
    stem = out.with_suffix("")
    dump_json(report["design"], stem.with_name(stem.name + ".design.json"))
    write_trace_csv(res, stem.with_name(stem.name + ".trace.csv"))
    print(f"{res.algorithm}: best objective {res.value:.6f} after {res.iterations} iterations")
    return 0


def cmd_eval(args) -> int:
    inst = load_instance(args.instance)
    design = load_design(args.design)
    _emit(json.dumps(evaluation_report(design, inst), indent=2) + "\n", args.out)
    return 0


def cmd_dot(args) -> int:
    design = load_design(args.design)
    if args.instance:
        tps = {(e["u"], e["v"]): e["tp_mbps"] for e in design_json(design, load_instance(args.instance))["edges"]}
    else:
        tps = design_throughputs(args.design)
    _emit(export_dot(design, tps), args.out)
    return 0


def cmd_bench(args) -> int:
    if args.time_limit_s is None and args.iterations is None:
        raise SystemExit("bench: give --time-limit-s and/or --iterations")
    insts = [load_instance(p) for p in args.instances]
    algs = args.algorithm or list(ALGORITHMS)
    rows = benchmark(insts, algs, args.repeats, args.seed, time_limit_s=args.time_limit_s,
                     iterations=args.iterations, lam=args.lam, kappa=args.kappa)
    meta = {
        "version": version(),
        "prng": PRNG,
        "seeds": [args.seed + k for k in range(args.repeats)],
        "time_limit_s": args.time_limit_s,
        "iterations": args.iterations,
        "lambda": args.lam,
        "kappa": args.kappa,
    }
    write_summary(rows, f"{args.out}.csv", f"{args.out}.json", meta)
    return 0


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "eval": cmd_eval, "dot": cmd_dot, "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValueError, KeyError, OSError) as exc:
        print(f"tacnet {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
