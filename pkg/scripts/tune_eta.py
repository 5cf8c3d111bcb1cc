"""Sweep the behavior-cloning coefficient eta on the toy environments.

For each (env, family, eta) two runs are scored:
  * theta=1 on the lineworld mixed-corner data: mean corner utility at the
    default bc weight (how well the regularizer copes with conflicting modes);
  * theta=0 on 500 expert trajectories: hypervolume over oracle hypervolume.

Usage: python scripts/tune_eta.py --env mo-lineworld --family diffusion
"""
import argparse

import numpy as np

from promorl.envs import get_spec, oracle_pareto_front
from promorl.experiments import expert_dataset, mixed_corner_dataset
from promorl.metrics import hypervolume_exact
from promorl.trainer import TrainConfig, evaluate_policy, train

GRID = (1.0, 3.0, 10.0, 30.0, 100.0)


def corner_score(family, eta, iterations, seed):
    b = train(TrainConfig("mo-lineworld", family, theta=1.0, eta=eta, seed=seed,
                          total_iterations=iterations), mixed_corner_dataset()).bundle
    rows = evaluate_policy(b, prefs=[np.array([0.0, 1.0]), np.array([1.0, 0.0])],
                           episodes_per_pref=5)
    return np.mean([p.weights @ r for p, r in rows])


def front_score(env, family, eta, iterations, seed):
    b = train(TrainConfig(env, family, theta=0.0, eta=eta, seed=seed,
                          total_iterations=iterations), expert_dataset(env)).bundle
    pts = np.array([r for _, r in evaluate_policy(b, 101, 5)])
    return hypervolume_exact(pts, [0, 0]) / hypervolume_exact(oracle_pareto_front(get_spec(env)), [0, 0])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--env", default="mo-lineworld")
    ap.add_argument("--family", default="mse")
    ap.add_argument("--etas", default=",".join(str(e) for e in GRID))
    ap.add_argument("--iterations", type=int, default=20000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for eta in (float(e) for e in args.etas.split(",")):
        line = f"{args.env} {args.family} eta={eta:g}"
        if args.env == "mo-lineworld":
            line += f" corner={corner_score(args.family, eta, args.iterations, args.seed):.2f}"
        line += f" hv_ratio={front_score(args.env, args.family, eta, args.iterations, args.seed):.3f}"
        print(line, flush=True)


if __name__ == "__main__":
    main()
