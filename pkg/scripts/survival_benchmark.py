"""Full-data vs condensed Cox models on the Weibull survival benchmark.

    python scripts/survival_benchmark.py --seeds 0 1 2 3 4 --ipc 100
"""

import argparse
import json

import numpy as np

from zodc.experiments import SurvivalRun, survival_parity


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--ipc", type=int, default=100)
    ap.add_argument("--censor-frac", type=float, default=0.3)
    ap.add_argument("--max-iters", type=int, default=2000)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    run = SurvivalRun(ipc=args.ipc, censor_frac=args.censor_frac, max_iters=args.max_iters)
    rows = []
    print("seed  full_c  cond_c  gap      km_sup  seconds")
    for seed in args.seeds:
        r = survival_parity(seed, run)
        rows.append(r)
        print(f"{seed:4d}  {r['full_cindex']:.4f}  {r['condensed_cindex']:.4f}  "
              f"{r['cindex_gap']:+.4f}  {r['km_sup_distance']:.4f}  {r['seconds']:.1f}")
    print(f"median gap {np.median([r['cindex_gap'] for r in rows]):+.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=2, default=float)


if __name__ == "__main__":
    main()
