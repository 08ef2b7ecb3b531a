"""Partial cache-line stores and modelled cycles as the extents drift off a multiple of 32.

A transpose of an (n, n) matrix, or (n, m) with --m, with n swept around a
multiple of the warp width.
For each n the script prints the exact traffic of the model's chosen plan, the
share of partial 32-byte lines, TPR_mem and the modelled cycles per element.

    python3 scripts/misalignment_study.py --lo 56 --hi 72
"""
import argparse

from ttplan import build_all_plans, estimate_cycles, get_profile
from ttplan.indexmath import Permutation, TensorLayout
from ttplan.selection import select_heuristic
from ttplan.sim import SimConfig, simulate_plan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=0, help="second extent (default: n)")
    ap.add_argument("--lo", type=int, default=56)
    ap.add_argument("--hi", type=int, default=72)
    ap.add_argument("--elem", type=int, default=8)
    ap.add_argument("--device", default="kepler-k20x")
    args = ap.parse_args()

    prof = get_profile(args.device)
    cfg = SimConfig.from_profile(prof)
    perm = Permutation((2, 1))
    print(f"{'n':>4} {'plan':<44} {'ld_tran':>8} {'st_tran':>8} {'part %':>7} {'TPR':>6} {'cyc/elem':>9}")
    for n in range(args.lo, args.hi + 1):
        layout = TensorLayout((n, args.m or n), args.elem)
        plan = select_heuristic(build_all_plans(layout, perm, prof), prof)
        t = simulate_plan(plan, cfg, verify=False)
        est = estimate_cycles(plan, prof, traffic=t)
        part = t.cl_part / max(1, t.cl_part + t.cl_full)
        print(f"{n:>4} {plan.label():<44} {t.ld_tran:>8} {t.st_tran:>8} {part:>7.1%} "
              f"{est.tpr_mem:>6.3f} {est.total_cycles / layout.volume:>9.5f}")


if __name__ == "__main__":
    main()
