"""Command-line front end: ``ttplan plan|simulate|exec|bench|profile``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench as B
from .costmodel import estimate_cycles
from .device import BUILTIN_PROFILES, DEFAULT_PROFILE, ProfileError, get_profile
from .executor import TensorBuffer, WriteMode, measure_bandwidth, transpose_execute, transpose_scatter
from .indexmath import LayoutError, Permutation, TensorLayout
from .plans import PlanError, build_all_plans
from .selection import select_heuristic, select_simulated
from .sim import SimConfig, SimulationError, simulate_plan

EXIT_ORACLE = 2

DTYPES = {"u4": "<u4", "u8": "<u8", "i4": "<i4", "i8": "<i8", "f4": "<f4", "f8": "<f8"}


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _case(args) -> tuple[TensorLayout, Permutation]:
    layout = TensorLayout(args.extents, args.elem)
    perm = Permutation(args.perm)
    if len(perm) != layout.rank:
        raise LayoutError(f"permutation has {len(perm)} labels, tensor has rank {layout.rank}")
    return layout, perm


def _select(plans, profile, args):
    if args.mode == "simulated":
        return select_simulated(plans, SimConfig.from_profile(profile))
    return select_heuristic(plans, profile, args.seed)


def cmd_plan(args, profile) -> int:
    layout, perm = _case(args)
    plans = build_all_plans(layout, perm, profile)
    ests = [estimate_cycles(p, profile, args.seed) for p in plans]
    best = min(range(len(plans)), key=lambda i: ests[i].total_cycles)
    if args.out == "json":
        print(json.dumps([{"plan": p.to_dict(), "estimate": e.to_dict(), "selected": i == best}
                          for i, (p, e) in enumerate(zip(plans, ests))], indent=2))
        return 0
    for i, (p, e) in enumerate(zip(plans, ests)):
        mark = "*" if i == best else " "
        print(f"{mark} [{i}] {p.describe()}")
        print(f"      cycles {e.total_cycles:.1f}  TPR_mem {e.tpr_mem:.3f}  MLP {e.mlp:.2f}  "
              f"MWP {e.mwp:.2f}  iters/SM {e.n_iter:.2f}")
    return 0


def cmd_simulate(args, profile) -> int:
    layout, perm = _case(args)
    cfg = SimConfig.from_profile(profile)
    plans = build_all_plans(layout, perm, profile)
    chosen = plans if args.all else [_select(plans, profile, args)]
    trace = open(args.trace, "w") if args.trace else None
    try:
        rows = []
        for p in chosen:
            t = simulate_plan(p, cfg, verify=True, trace=trace)
            rows.append({"plan": p.label(), **t.to_dict()})
    finally:
        if trace:
            trace.close()
    if args.out == "json":
        print(json.dumps(rows, indent=2))
    else:
        keys = list(rows[0])
        print(",".join(keys))
        for r in rows:
            print(",".join(f'"{r[k]}"' if k == "plan" else str(r[k]) for k in keys))
    return 0


def cmd_exec(args, profile) -> int:
    layout, perm = _case(args)
    plan = _select(build_all_plans(layout, perm, profile), profile, args)
    mode = WriteMode.ACCUMULATE if args.accumulate else WriteMode.WRITE
    dtype = np.dtype(DTYPES[args.dtype or ("u8" if args.elem == 8 else "u4")])
    if dtype.itemsize != args.elem:
        raise LayoutError(f"dtype {args.dtype} does not have {args.elem}-byte elements")
    if args.input:
        data = np.fromfile(args.input, dtype=dtype)
        inp = TensorBuffer(data.astype(dtype.newbyteorder("="), copy=False), layout)
    else:
        inp = TensorBuffer.random(layout, np.random.default_rng(args.seed), dtype.newbyteorder("="))
    out_layout = perm.output_layout(layout)
    init = None
    if mode is WriteMode.ACCUMULATE:
        if args.output and Path(args.output).exists():
            init = np.fromfile(args.output, dtype=dtype).astype(dtype.newbyteorder("="))
        else:
            init = np.zeros(layout.volume, dtype=dtype.newbyteorder("="))
    ref = transpose_scatter(inp, perm, mode,
                            None if init is None else TensorBuffer(init.copy(), out_layout))
    got = transpose_execute(plan, inp, mode, args.workers,
                            None if init is None else TensorBuffer(init.copy(), out_layout))
    ok = np.array_equal(ref.bits(), got.bits())
    print(f"plan      {plan.label()}")
    print(f"verified  {ok}")
    if args.reps:
        bw = measure_bandwidth(plan, mode, args.reps, args.workers, args.seed)
        print(f"bandwidth {bw / 1e9:.3f} GB/s (host, median of {args.reps})")
    if args.output:
        got.elements.astype(dtype).tofile(args.output)
    return 0 if ok else EXIT_ORACLE


def cmd_bench(args, profile) -> int:
    if args.set == "set1":
        spec = B.BenchSpec(mean_volume=args.mean_volume, sd_volume=0.2 * args.mean_volume,
                           n_perms=args.perms, element_size=args.elem, seed=args.seed)
        cases = B.gen_set1(spec)
    elif args.set == "set2":
        cases = B.gen_set2(args.scale, args.perms, args.seed, args.elem)
    else:
        if not args.cases:
            raise B.CaseFileError("bench custom needs --cases FILE")
        cases = B.load_custom_cases(args.cases, args.elem)
    opts = B.BenchOptions(mode=args.mode, execute=not args.no_exec, timing=args.timing,
                          repetitions=args.reps, sample_seed=args.seed)
    records = B.run_bench(cases, profile, opts, workers=args.workers)
    summary = B.summarize(records)
    if args.out == "json":
        text = B.records_json(records, summary, args.timing)
    else:
        text = B.records_csv(records, args.timing)
    if args.output:
        Path(args.output).write_text(text)
        print(B.summary_table(summary))
    else:
        sys.stdout.write(text)
        print(B.summary_table(summary), file=sys.stderr)
    return 0 if summary.ok else EXIT_ORACLE


def cmd_profile(args, profile) -> int:
    if args.action == "list":
        for name, p in BUILTIN_PROFILES.items():
            mark = "*" if name == DEFAULT_PROFILE else " "
            print(f"{mark} {name:<12} N_SM {p.n_sm:>3}  BW {p.mem_bw / 1e9:6.1f} GB/s  "
                  f"delta {p.delta:<4} mem_lat {p.mem_baselat:<4} shmem_lat {p.shmem_lat:<3} "
                  f"ac {p.cycles_ac}")
    else:
        print(json.dumps(profile.__dict__, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--device", default=DEFAULT_PROFILE, help="built-in profile name or file")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--elem", type=int, default=8, choices=(4, 8), help="element size in bytes")
    common.add_argument("--mode", default="heuristic", choices=("heuristic", "simulated", "both"))
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--out", default="csv", choices=("csv", "json"))
    common.add_argument("-v", "--verbose", action="store_true")

    case = argparse.ArgumentParser(add_help=False)
    case.add_argument("extents", type=_int_list, help="e.g. 32,48,5")
    case.add_argument("perm", type=_int_list, help="1-based, e.g. 3,1,2")

    ap = argparse.ArgumentParser(prog="ttplan", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("plan", parents=[common, case], help="list and model every plan for a case")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", parents=[common, case], help="exact memory traffic")
    p.add_argument("--all", action="store_true", help="simulate every plan, not just the selected")
    p.add_argument("--trace", help="write a per-warp address dump here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("exec", parents=[common, case], help="run the selected plan on the host")
    p.add_argument("--input", help="flat little-endian input file (random data if absent)")
    p.add_argument("--output", help="write the result here")
    p.add_argument("--dtype", choices=sorted(DTYPES))
    p.add_argument("--accumulate", action="store_true")
    p.add_argument("--reps", type=int, default=0, help="timed repetitions for bandwidth")
    p.set_defaults(func=cmd_exec)

    p = sub.add_parser("bench", parents=[common], help="run a benchmark set")
    p.add_argument("set", choices=("set1", "set2", "custom"))
    p.add_argument("--scale", type=int, default=8, help="set2 divisor for the large dimensions")
    p.add_argument("--perms", type=int, default=None, help="random permutations per shape")
    p.add_argument("--mean-volume", type=float, default=float(1 << 20))
    p.add_argument("--cases", help="case file for 'custom'")
    p.add_argument("--output", help="write records here; the summary goes to stdout")
    p.add_argument("--timing", action="store_true", help="time the host executor")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--no-exec", action="store_true", help="skip host execution")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("profile", parents=[common], help="device profiles")
    p.add_argument("action", choices=("list", "show"))
    p.set_defaults(func=cmd_profile)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "perms", 0) is None:
        args.perms = 2 if args.set == "set1" else 8
    try:
        profile = get_profile(args.device)
        return args.func(args, profile)
    except SimulationError as exc:
        print(f"ttplan: oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except (LayoutError, PlanError, ProfileError, B.BenchSpecError, B.CaseFileError,
            OSError, ValueError) as exc:
        print(f"ttplan: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
