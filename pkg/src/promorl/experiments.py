"""Experiment grid shared by the ``repro`` command and the ablation tests."""
from __future__ import annotations

import numpy as np

from .baselines import BcpConfig, CqlConfig, train_bc_p, train_mo_cql
from .dataset import OfflineDataset, generate_dataset
from .errors import InvalidConfigurationError, TrainingDivergedError
from .metrics import front_summary
from .regularizers import FAMILIES
from .trainer import TrainConfig, config_hash, evaluate_policy, train

ALGOS = FAMILIES + ("mo-cql", "bc-p")

SUITES = {
    "smoke": {"seeds": (0,), "iterations": 2000},
    "desk": {"seeds": (0, 1, 2), "iterations": 20000},
}


def make_config(algo: str, env_name: str, **fields):
    if algo in FAMILIES:
        return TrainConfig(env_name, regularizer_family=algo, **fields)
    if algo == "mo-cql":
        return CqlConfig(env_name, **fields)
    if algo == "bc-p":
        return BcpConfig(env_name, **fields)
    raise InvalidConfigurationError(f"unknown algorithm {algo!r}; expected one of {ALGOS}")


def algo_of(config) -> str:
    if isinstance(config, CqlConfig):
        return "mo-cql"
    if isinstance(config, BcpConfig):
        return "bc-p"
    return config.regularizer_family


def train_any(config, ds: OfflineDataset, **kwargs):
    if isinstance(config, CqlConfig):
        return train_mo_cql(config, ds, **kwargs)
    if isinstance(config, BcpConfig):
        return train_bc_p(config, ds, **kwargs)
    return train(config, ds, **kwargs)


def ablation_dataset(env_name: str = "mo-lineworld", n_traj: int = 100, seed: int = 0):
    """Half expert, half noisy rollouts under uniformly drawn preferences."""
    return generate_dataset(env_name, n_traj, quality_mix=0.5, noise_scale=0.3,
                            pref_sampler="uniform-simplex", seed=seed)


def mixed_corner_dataset(n_traj: int = 100, seed: int = 0):
    """Expert lineworld rollouts whose behavior preferences are only [1,0] and [0,1]."""
    return generate_dataset("mo-lineworld", n_traj, quality_mix=1.0, noise_scale=0.0,
                            pref_sampler="corner-mixture", seed=seed)


def expert_dataset(env_name: str, n_traj: int = 500, seed: int = 0):
    return generate_dataset(env_name, n_traj, quality_mix=1.0, noise_scale=0.0,
                            pref_sampler="uniform-simplex", seed=seed)


def run_grid(ds: OfflineDataset, algos=ALGOS, thetas=(0.0, 1.0), seeds=(0,),
             iterations: int = 2000, n_prefs: int = 101, episodes: int = 5,
             reference_point=None, **overrides) -> list[dict]:
    """Train and evaluate every (algo, theta, seed); divergent runs are recorded, not raised."""
    ref = np.zeros(ds.n_objectives) if reference_point is None else np.asarray(reference_point, float)
    rows = []
    for algo in algos:
        thetas_for = (0.0,) if algo == "bc-p" else thetas
        for theta in thetas_for:
            for seed in seeds:
                cfg = make_config(algo, ds.env_name, theta=theta, seed=seed,
                                  total_iterations=iterations, **overrides)
                row = {"algo": algo, "theta": theta, "seed": seed,
                       "config_hash": config_hash(cfg.to_dict()),
                       "reference_point": ref.tolist()}
                try:
                    res = train_any(cfg, ds)
                except TrainingDivergedError as exc:
                    row.update(diverged=True, error=str(exc), hv=np.nan, eu=np.nan,
                               sp_filtered=np.nan, final_critic_loss=np.nan)
                    rows.append(row)
                    continue
                evals = evaluate_policy(res.bundle, n_prefs, episodes, seed=seed)
                s = front_summary(evals, ref)
                last = res.log[-1] if res.log else {}
                row.update(diverged=False, hv=s["hv"], eu=s["eu"], sp_filtered=s["sp_filtered"],
                           final_critic_loss=float(last.get("critic_loss", np.nan)),
                           final_actor_loss=float(last.get("actor_loss", np.nan)))
                rows.append(row)
    return rows


def _fmt(values) -> str:
    v = np.asarray(values, dtype=float)
    if np.isnan(v).any():
        return "diverged"
    if v.size == 1:
        return f"{v[0]:.2f}"
    return f"{v.mean():.2f} ± {v.std():.2f}"


def markdown_table(rows: list[dict]) -> str:
    """Mean ± std over seeds per (algo, theta)."""
    keys = []
    for r in rows:
        k = (r["algo"], r["theta"])
        if k not in keys:
            keys.append(k)
    lines = ["| algorithm | theta | Hv | Sp | EU | seeds |", "|---|---|---|---|---|---|"]
    for algo, theta in keys:
        sel = [r for r in rows if r["algo"] == algo and r["theta"] == theta]
        lines.append(f"| {algo} | {theta:g} | {_fmt([r['hv'] for r in sel])} | "
                     f"{_fmt([r['sp_filtered'] for r in sel])} | {_fmt([r['eu'] for r in sel])} | "
                     f"{','.join(str(r['seed']) for r in sel)} |")
    return "\n".join(lines) + "\n"
