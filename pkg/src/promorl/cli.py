"""Command-line driver: ``promorl <command> [options]``.

Exit codes: 0 success, 2 usage, 3 validation, 4 runtime or numerical failure.
Run directories default to ``$PROMORL_RUNS`` (or ``./runs``).
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adaptation import AdaptConfig, adapt_many, oracle_wbc_many
from .baselines import BcpConfig, CqlConfig, load_any_bundle
from .dataset import generate_dataset, load_dataset, save_dataset
from .envs import ENV_NAMES, get_spec, oracle_pareto_front
from .errors import (DegenerateReturnError, IntegrityError, InvalidArgumentError,
                     InvalidConfigurationError, ParseError, PromorlError, UnsupportedError)
from .experiments import ALGOS, SUITES, ablation_dataset, algo_of, make_config, markdown_table, \
    run_grid, train_any
from .metrics import read_front, write_front
from .nn import save_checkpoint
from .svg import front_svg
from .trainer import PolicyBundle, TrainConfig, config_hash, evaluate_policy, load_defaults

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3, 4
RUNS_ENV = "PROMORL_RUNS"
_VALIDATION = (InvalidArgumentError, InvalidConfigurationError, ParseError, IntegrityError,
               DegenerateReturnError, UnsupportedError, FileNotFoundError, ValueError)

log = logging.getLogger("promorl")


def runs_root() -> Path:
    return Path(os.environ.get(RUNS_ENV, "runs"))


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provenance(config_dict: dict, seed) -> dict:
    return {"config_hash": config_hash(config_dict), "seed": seed, "code_version": __version__}


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=float) + "\n")


# ---------------------------------------------------------------- config io

def _field_caster(cls, name):
    types = {f.name: str(f.type) for f in dataclasses.fields(cls)}
    if name not in types:
        raise InvalidConfigurationError(f"unknown key {name!r} for {cls.__name__}")
    t = types[name]
    if "tuple" in t:
        return lambda s: tuple(int(x) for x in str(s).split(","))
    if "float" in t:
        return float
    if "int" in t:
        return int
    return str


def read_section(path, section: str) -> dict:
    if path is None:
        return {}
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise FileNotFoundError(f"config file {path} not found")
    return dict(cp[section]) if cp.has_section(section) else {}


def write_config(path, sections: dict):
    cp = configparser.ConfigParser()
    for name, values in sections.items():
        cp[name] = {k: ",".join(map(str, v)) if isinstance(v, (list, tuple)) else str(v)
                    for k, v in values.items() if v is not None}
    with open(path, "w") as fh:
        cp.write(fh)


def _config_class(algo):
    return {"mo-cql": CqlConfig, "bc-p": BcpConfig}.get(algo, TrainConfig)


def resolve_train_config(args):
    """INI ``[train]`` values, overridden by explicit flags."""
    raw = read_section(args.config, "train")
    algo = args.algo or raw.pop("algo", None) or "mse"
    raw.pop("algo", None)
    if algo not in ALGOS:
        raise InvalidConfigurationError(f"--algo must be one of {ALGOS}")
    cls = _config_class(algo)
    fields = {k: _field_caster(cls, k)(v) for k, v in raw.items() if k != "regularizer_family"}
    flags = {"env_name": args.env, "theta": args.theta, "seed": args.seed,
             "total_iterations": args.iterations, "eta": args.eta, "alpha": args.alpha}
    for k, v in flags.items():
        if v is not None:
            if k in ("eta",) and cls is not TrainConfig or k == "alpha" and cls is not CqlConfig:
                raise InvalidConfigurationError(f"--{k} does not apply to --algo {algo}")
            fields[k] = v
    return fields, algo


# ----------------------------------------------------------------- commands

def cmd_gen_data(args):
    quality = {"expert": 1.0, "amateur": 0.0}.get(args.quality)
    if quality is None:
        try:
            quality = float(args.quality)
        except ValueError:
            raise InvalidArgumentError("--quality must be expert, amateur or a mix in [0, 1]")
    ds = generate_dataset(args.env, args.n, quality, args.noise, args.pref, args.seed)
    out = Path(args.out or runs_root() / f"{args.env}-{args.seed}.jsonl")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, out)
    manifest = {"env": args.env, "n_traj": args.n, "quality_mix": quality, "noise_scale": args.noise,
                "pref_sampler": args.pref, "seed": args.seed}
    manifest.update(_provenance(manifest, args.seed), dataset_sha256=_sha256(out),
                    n_trajectories=len(ds))
    _write_json(out.with_suffix(".manifest.json"), manifest)
    if ds.warning:
        log.warning(ds.warning)
    print(out)


def cmd_train(args):
    fields, algo = resolve_train_config(args)
    data_path = args.data or read_section(args.config, "dataset").get("path")
    if not data_path:
        raise InvalidConfigurationError("--data (or [dataset] path) is required")
    if "env_name" not in fields:
        fields["env_name"] = None
    env_hint = fields.pop("env_name")
    # validate the config before touching the dataset
    cfg = make_config(algo, env_hint or _peek_env(data_path), **fields)
    ds = load_dataset(data_path)
    if cfg.env_name != ds.env_name:
        raise InvalidConfigurationError(
            f"config env {cfg.env_name!r} does not match dataset env {ds.env_name!r}")
    cfg_dict = cfg.to_dict()
    run_dir = Path(args.run_dir or runs_root() / f"{algo}-{config_hash(cfg_dict)}-s{cfg.seed}")
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    write_config(run_dir / "config.ini", {"train": {"algo": algo, **cfg_dict},
                                          "dataset": {"path": str(data_path)}})
    res = train_any(cfg, ds, log_path=run_dir / "metrics.csv",
                    checkpoint_dir=run_dir / "checkpoints")
    res.bundle.metadata.update(_provenance(cfg_dict, cfg.seed))
    ckpt = run_dir / "policy.ckpt"
    save_checkpoint(ckpt, res.bundle.header(), res.bundle.named_params())
    manifest = {"algo": algo, **_provenance(cfg_dict, cfg.seed),
                "dataset": str(data_path), "dataset_sha256": _sha256(data_path),
                "iterations": res.bundle.iteration}
    _write_json(run_dir / "manifest.json", manifest)
    print(run_dir)


def _peek_env(path) -> str:
    with open(path) as fh:
        head = json.loads(fh.readline())
    return head.get("env")


def _parse_kv(text: str) -> dict:
    out = {}
    for part in filter(None, text.split(",")):
        if "=" not in part:
            raise InvalidArgumentError(f"expected key=value, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _adapt_config(spec: dict, base=None) -> AdaptConfig:
    d = load_defaults()["adapt"]
    kv = {k.upper() if k.lower() in ("n", "k") else k: v for k, v in spec.items()}
    fields = {"iterations": int(kv.pop("N", d["iterations"])),
              "trajectories": int(kv.pop("K", d["trajectories"])),
              "learning_rate": float(kv.pop("lr", d["learning_rate"])),
              "sigma_floor": float(kv.pop("sigma_floor", d["sigma_floor"]))}
    for key in ("lower", "upper", "mu0", "sigma0"):
        if key in kv:
            fields[key] = float(kv.pop(key))
    if kv:
        raise InvalidArgumentError(f"unknown adaptation keys {sorted(kv)}")
    if base is not None and "lower" not in fields:
        fields["lower"] = base
    return AdaptConfig(**fields)


def _parse_pref(text: str, n: int) -> np.ndarray:
    try:
        w = np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise InvalidArgumentError(f"cannot parse preference {text!r}")
    if w.shape != (n,):
        raise InvalidArgumentError(f"preference {text!r} needs {n} components")
    return w


def cmd_adapt(args):
    bundle = load_any_bundle(args.ckpt)
    if not isinstance(bundle, PolicyBundle):
        raise InvalidConfigurationError("adaptation needs a policy checkpoint with a bc weight input")
    cfg = AdaptConfig(iterations=args.N, trajectories=args.K, learning_rate=args.lr,
                      lower=args.lower if args.lower is not None else bundle.config.wbc_min,
                      upper=args.upper)
    targets = [_parse_pref(t, bundle.n_objectives) for t in args.target]
    reports = adapt_many(bundle, targets, cfg, args.seed)
    payload = {**_provenance(bundle.config.to_dict(), args.seed),
               "adapt_config": dataclasses.asdict(cfg),
               "reports": [r.to_dict() for r in reports]}
    out = Path(args.out or Path(args.ckpt).with_name("adaptation.json"))
    _write_json(out, payload)
    print(out)


def _eval_wbc(args, bundle, prefs):
    """Returns (per-preference weights or None, extra sidecar info)."""
    if not isinstance(bundle, PolicyBundle):
        return None, {"wbc_mode": "none"}
    if args.adapt is not None and args.wbc is not None:
        raise InvalidArgumentError("use either --adapt or --wbc")
    if args.wbc is None and args.adapt is None:
        return None, {"wbc_mode": "default-midpoint"}
    if args.wbc is not None:
        mode, _, rest = args.wbc.partition(":")
        if mode == "fixed":
            w = float(rest)
            if not bundle.config.wbc_min <= w <= 1.0:
                raise InvalidArgumentError(f"fixed weight must lie in [{bundle.config.wbc_min}, 1]")
            return w, {"wbc_mode": "fixed", "wbc": w}
        if mode == "oracle":
            grid = int(_parse_kv(rest).get("grid", 20))
            best, _ = oracle_wbc_many(bundle, prefs, grid_points=grid, episodes=args.episodes,
                                      seed=args.seed, lower=bundle.config.wbc_min)
            return np.array(best), {"wbc_mode": "oracle", "grid": grid, "wbc": best}
        if mode == "adapt":
            args.adapt = rest
        else:
            raise InvalidArgumentError(f"unknown --wbc mode {mode!r}")
    cfg = _adapt_config(_parse_kv(args.adapt), base=bundle.config.wbc_min)
    reports = adapt_many(bundle, prefs, cfg, args.seed)
    w = np.array([r.final_wbc for r in reports])
    return w, {"wbc_mode": "adapted", "adapt_config": dataclasses.asdict(cfg),
               "reports": [r.to_dict() for r in reports]}


def cmd_eval(args):
    bundle = load_any_bundle(args.ckpt)
    from .core import preference_grid
    prefs = preference_grid(bundle.n_objectives, args.prefs)
    wbc, info = _eval_wbc(args, bundle, prefs)
    evals = evaluate_policy(bundle, episodes_per_pref=args.episodes, adapted_wbc=wbc,
                            seed=args.seed, prefs=prefs)
    ref = (_parse_pref(args.ref, bundle.n_objectives) if args.ref
           else np.zeros(bundle.n_objectives))
    out_dir = Path(args.out_dir or Path(args.ckpt).parent / "eval")
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {**_provenance(bundle.config.to_dict(), bundle.config.seed), "eval_seed": args.seed,
            "algo": algo_of(bundle.config), "n_prefs": args.prefs, "episodes": args.episodes,
            "wbc_mode": info["wbc_mode"]}
    summary = write_front(out_dir / "front.csv", evals, ref, meta)
    if "reports" in info or info["wbc_mode"] in ("fixed", "oracle"):
        _write_json(out_dir / "wbc.json", {**meta, **info, "reference_point": ref.tolist()})
    print(json.dumps({k: summary[k] for k in ("hv", "sp_filtered", "sp_raw", "eu")}, default=float))


def cmd_plot(args):
    evals = read_front(args.front) if args.front else []
    learned = np.array([r for _, r in evals]) if evals else None
    ref = None
    side = Path(args.front).with_suffix(".json") if args.front else None
    if side is not None and side.exists():
        ref = json.loads(side.read_text()).get("reference_point")
    data = load_dataset(args.data).returns if args.data else None
    oracle = oracle_pareto_front(get_spec(args.oracle_env)) if args.oracle_env else None
    if ref is None:
        n = 2 if learned is None else learned.shape[1]
        ref = np.zeros(n)
    warning = None
    if learned is None or len(learned) == 0:
        warning = "empty front"
        log.warning("plotting an empty front")
    svg = front_svg(learned, data, oracle, ref, title=args.title or "", warning=warning)
    out = Path(args.out or (Path(args.front).with_suffix(".svg") if args.front else "front.svg"))
    out.write_text(svg)
    print(out)


def cmd_oracle(args):
    spec = get_spec(args.env)
    front = oracle_pareto_front(spec)
    evals = [(r / r.sum(), r) for r in front]
    out = Path(args.out or runs_root() / f"oracle-{args.env}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    meta = {"env": args.env, "n_points": len(front), "config_hash": config_hash({"env": args.env}),
            "seed": None, "code_version": __version__}
    write_front(out, evals, np.zeros(spec.n_objectives), meta)
    print(out)


def cmd_repro(args):
    suite = dict(SUITES[args.suite])
    if args.seeds:
        suite["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    if args.iterations:
        suite["iterations"] = args.iterations
    algos = tuple(args.algos.split(",")) if args.algos else ALGOS
    bad = set(algos) - set(ALGOS)
    if bad:
        raise InvalidArgumentError(f"unknown algorithms {sorted(bad)}")
    ds = ablation_dataset(args.env, seed=args.data_seed)
    rows = run_grid(ds, algos, (0.0, 1.0), suite["seeds"], suite["iterations"])
    # provenance: every row's hash must be reproducible from its config
    for r in rows:
        cfg = make_config(r["algo"], args.env, theta=r["theta"], seed=r["seed"],
                          total_iterations=suite["iterations"])
        if config_hash(cfg.to_dict()) != r["config_hash"]:
            raise IntegrityError(f"config hash unstable for {r['algo']} theta={r['theta']}")
    out = Path(args.out or runs_root() / f"repro-{args.suite}" / "results.md")
    out.parent.mkdir(parents=True, exist_ok=True)
    header = (f"# {args.suite} suite on {args.env}\n\n"
              f"iterations {suite['iterations']}, seeds {list(suite['seeds'])}, "
              f"r0 = origin, bc weight fixed at the midpoint, code {__version__}\n\n")
    out.write_text(header + markdown_table(rows))
    _write_json(out.with_suffix(".json"), {"suite": args.suite, "env": args.env,
                                          "iterations": suite["iterations"], "rows": rows})
    print(out)


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="promorl", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate an offline dataset")
    g.add_argument("--env", required=True, choices=ENV_NAMES)
    g.add_argument("--n", type=int, default=200)
    g.add_argument("--quality", default="expert", help="expert, amateur or an expert fraction")
    g.add_argument("--noise", type=float, default=0.3)
    g.add_argument("--pref", default="uniform-simplex",
                   help="uniform-simplex, corner-mixture or fixed:w1,w2,...")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a policy or a baseline")
    t.add_argument("--config", help="INI file with [train] and [dataset] sections")
    t.add_argument("--algo", choices=ALGOS)
    t.add_argument("--data")
    t.add_argument("--env", choices=ENV_NAMES)
    t.add_argument("--theta", type=float)
    t.add_argument("--eta", type=float)
    t.add_argument("--alpha", type=float)
    t.add_argument("--iterations", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--run-dir")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("adapt", help="adapt the bc weight for target preferences")
    a.add_argument("--ckpt", required=True)
    a.add_argument("--target", action="append", required=True, help="comma-separated weights")
    a.add_argument("--N", type=int, default=3)
    a.add_argument("--K", type=int, default=10)
    a.add_argument("--lr", type=float, default=0.1)
    a.add_argument("--lower", type=float)
    a.add_argument("--upper", type=float, default=1.0)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out")
    a.set_defaults(func=cmd_adapt)

    e = sub.add_parser("eval", help="evaluate a checkpoint over a preference grid")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--prefs", type=int, default=101)
    e.add_argument("--episodes", type=int, default=5)
    e.add_argument("--adapt", help="adaptation settings, e.g. N=3,K=10")
    e.add_argument("--wbc", help="fixed:<w>, oracle:grid=<n> or adapt:N=..,K=..")
    e.add_argument("--ref", help="reference point, comma-separated (default origin)")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out-dir")
    e.set_defaults(func=cmd_eval)

    pl = sub.add_parser("plot", help="render a front as SVG")
    pl.add_argument("--front")
    pl.add_argument("--data")
    pl.add_argument("--oracle-env", choices=ENV_NAMES)
    pl.add_argument("--title")
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plot)

    o = sub.add_parser("oracle", help="write the exact Pareto front of an environment")
    o.add_argument("--env", required=True, choices=ENV_NAMES)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    r = sub.add_parser("repro", help="run the ablation grid and write a results table")
    r.add_argument("--suite", choices=tuple(SUITES), default="smoke")
    r.add_argument("--env", choices=ENV_NAMES, default="mo-lineworld")
    r.add_argument("--algos", help=f"comma-separated subset of {','.join(ALGOS)}")
    r.add_argument("--seeds")
    r.add_argument("--iterations", type=int)
    r.add_argument("--data-seed", type=int, default=0)
    r.add_argument("--out")
    r.set_defaults(func=cmd_repro)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    try:
        args.func(args)
    except _VALIDATION as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (PromorlError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
