"""Run the two benchmark sets and write one CSV and one summary per set.

    python3 scripts/run_sets.py --out results --set2-scale 8 --set2-perms 20
"""
import argparse
from pathlib import Path

from ttplan import get_profile
from ttplan import bench as B


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--device", default="kepler-k20x")
    ap.add_argument("--mode", default="both", choices=("heuristic", "simulated", "both"))
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--set1-perms", type=int, default=2)
    ap.add_argument("--set2-scale", type=int, default=8)
    ap.add_argument("--set2-perms", type=int, default=20)
    ap.add_argument("--timing", action="store_true")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prof = get_profile(args.device)
    opts = B.BenchOptions(mode=args.mode, timing=args.timing, sample_seed=args.seed)
    sets = {
        "set1": B.gen_set1(B.BenchSpec(n_perms=args.set1_perms, seed=args.seed)),
        "set2": B.gen_set2(args.set2_scale, args.set2_perms, args.seed),
    }
    for name, cases in sets.items():
        recs = B.run_bench(cases, prof, opts, workers=args.workers)
        summary = B.summarize(recs)
        (out / f"{name}.csv").write_text(B.records_csv(recs, args.timing))
        (out / f"{name}_summary.txt").write_text(B.summary_table(summary) + "\n")
        print(f"== {name} ({len(cases)} cases)")
        print(B.summary_table(summary))


if __name__ == "__main__":
    main()
