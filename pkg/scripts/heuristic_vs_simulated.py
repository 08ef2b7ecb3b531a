"""How often the model picks a plan whose exact traffic is close to the best one.

For random cases, enumerate every plan, simulate each exactly, and compare the
model's choice against the lowest-transaction plan. Reports the share within
1.5x, the agreement rate and the ratio tail, per device profile.

    python3 scripts/heuristic_vs_simulated.py --cases 200 --max-log2 20
"""
import argparse
from collections import Counter

import numpy as np

from ttplan import build_all_plans, get_profile
from ttplan.device import BUILTIN_PROFILES
from ttplan.indexmath import Permutation, TensorLayout
from ttplan.selection import select_heuristic
from ttplan.sim import SimConfig, simulate_plan


def random_case(rng, max_rank, max_log2, elem):
    rank = int(rng.integers(1, max_rank + 1))
    w = rng.dirichlet(np.ones(rank)) * rng.uniform(0, max_log2)
    ext = [max(1, int(2 ** x)) for x in w]
    perm = Permutation(tuple(int(x) + 1 for x in rng.permutation(rank)))
    return TensorLayout(tuple(ext), elem), perm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cases", type=int, default=200)
    ap.add_argument("--max-rank", type=int, default=7)
    ap.add_argument("--max-log2", type=int, default=20)
    ap.add_argument("--elem", type=int, default=8)
    ap.add_argument("--seed", type=int, default=606)
    ap.add_argument("--profiles", nargs="*", default=list(BUILTIN_PROFILES))
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    cfg = SimConfig()
    cases = []
    for _ in range(args.cases):
        layout, perm = random_case(rng, args.max_rank, args.max_log2, args.elem)
        plans = build_all_plans(layout, perm, get_profile(args.profiles[0]))
        cases.append((layout, perm, plans, [simulate_plan(p, cfg, verify=False) for p in plans]))

    print(f"{'profile':<13} {'within 1.5x':>11} {'agree':>6} {'median':>7} {'p90':>7} {'max':>7}  chosen kinds")
    for name in args.profiles:
        prof = get_profile(name)
        ratios, agree, kinds = [], 0, Counter()
        for layout, perm, _, _ in cases:
            # plans depend on the profile only through the SM count in the grid
            plans = build_all_plans(layout, perm, prof)
            exact = [simulate_plan(p, cfg, verify=False).global_tran for p in plans]
            chosen = plans.index(select_heuristic(plans, prof, 0))
            best = min(exact)
            ratios.append(exact[chosen] / best)
            agree += exact[chosen] == best
            kinds[plans[chosen].kind.value] += 1
        r = np.array(ratios)
        print(f"{name:<13} {np.mean(r <= 1.5):>11.1%} {agree / len(r):>6.1%} {np.median(r):>7.3f} "
              f"{np.quantile(r, 0.9):>7.3f} {r.max():>7.3f}  "
              + " ".join(f"{k}={v}" for k, v in sorted(kinds.items())))


if __name__ == "__main__":
    main()
