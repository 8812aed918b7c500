"""Privacy-utility trade-off: sweep the base noise level and report epsilon against AUROC.

    python scripts/sigma_sweep.py --sigma-base 2 4 8 16 --seed 0
"""

import argparse

from zodc.experiments import ClassificationRun, classification_parity


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sigma-base", type=float, nargs="+", default=[2.0, 4.0, 8.0, 16.0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--ipc", type=int, default=50)
    ap.add_argument("--max-iters", type=int, default=1000)
    args = ap.parse_args()

    print("sigma_base  epsilon  cond_auroc  full_auroc  best_iter")
    for sb in args.sigma_base:
        r = classification_parity(args.seed, ClassificationRun(ipc=args.ipc, sigma_base=sb,
                                                               max_iters=args.max_iters,
                                                               attack=False))
        print(f"{sb:10.2f}  {r['epsilon']:7.3f}  {r['condensed_auroc']:.4f}      "
              f"{r['full_auroc']:.4f}      {r['best_iteration']}")


if __name__ == "__main__":
    main()
