"""Sweep the MO-CQL conservatism weight alpha on the ablation dataset.

Usage: python scripts/tune_mocql_alpha.py --alphas 1,3,10,30
"""
import argparse

from promorl.experiments import ablation_dataset, run_grid


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--env", default="mo-lineworld")
    ap.add_argument("--alphas", default="1,3,10,30")
    ap.add_argument("--iterations", type=int, default=5000)
    args = ap.parse_args()
    ds = ablation_dataset(args.env)
    for alpha in (float(a) for a in args.alphas.split(",")):
        for r in run_grid(ds, ("mo-cql",), thetas=(0.0,), iterations=args.iterations, alpha=alpha):
            print(f"alpha={alpha:g} hv={r['hv']:.1f} eu={r['eu']:.2f} diverged={r['diverged']}",
                  flush=True)


if __name__ == "__main__":
    main()
