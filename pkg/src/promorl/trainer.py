"""Preference-conditioned scalarized actor-critic with an augmented preference.

The actor maximizes ``(1 - w_bc) * w.Q`` minus ``w_bc * eta * L_bc``; the
vector critics regress ``r + gamma * Q_target`` where the bootstrap vector
comes from the target critic with the lowest scalarized value.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .core import Preference, as_vector, preference_grid
from .dataset import OfflineDataset, SampleBatch, sample_batch
from .envs import EnvSpec, get_spec, rollout
from .errors import (InvalidConfigurationError, NonFiniteGradientError, NumericalError,
                     TrainingDivergedError)
from .nn import (Mlp, MlpConfig, OptimizerState, adam_step, load_checkpoint, polyak_update,
                 save_checkpoint, zero_grad)
from .regularizers import FAMILIES, SCHEDULES, actor_input, make_actor

LOG_COLUMNS = ("iteration", "critic_loss", "actor_loss", "mean_wbc", "wall_ms")


def load_defaults() -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.read_string(resources.files("promorl").joinpath("configs/defaults.ini").read_text())
    return cp


def default_eta(env_name: str, family: str) -> float:
    cp = load_defaults()
    section = f"eta {env_name}"
    if cp.has_option(section, family):
        return cp.getfloat(section, family)
    return cp.getfloat("eta", family)


def _train_default(key, cast=float):
    raw = load_defaults().get("train", key)
    if cast is tuple:
        return tuple(int(x) for x in raw.split(","))
    return cast(raw)


@dataclass(frozen=True)
class TrainConfig:
    env_name: str
    regularizer_family: str = "mse"
    theta: float = 0.0
    wbc_min: float = field(default_factory=lambda: _train_default("wbc_min"))
    eta: float | None = None
    gamma: float = field(default_factory=lambda: _train_default("gamma"))
    batch_size: int = field(default_factory=lambda: _train_default("batch_size", int))
    total_iterations: int = field(default_factory=lambda: _train_default("total_iterations", int))
    n_critics: int = field(default_factory=lambda: _train_default("n_critics", int))
    polyak_tau: float = field(default_factory=lambda: _train_default("polyak_tau"))
    seed: int = 0
    actor_lr: float = field(default_factory=lambda: _train_default("actor_lr"))
    critic_lr: float = field(default_factory=lambda: _train_default("critic_lr"))
    hidden: tuple = field(default_factory=lambda: _train_default("hidden", tuple))
    activation: str = field(default_factory=lambda: _train_default("activation", str))
    diffusion_schedule: str = field(default_factory=lambda: _train_default("diffusion_schedule", str))
    diffusion_steps: int = field(default_factory=lambda: _train_default("diffusion_steps", int))
    latent_dim: int | None = None
    log_every: int = field(default_factory=lambda: _train_default("log_every", int))
    checkpoint_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.eta is None and self.regularizer_family in FAMILIES:
            object.__setattr__(self, "eta", default_eta(self.env_name, self.regularizer_family))
        self.validate()

    def validate(self):
        def bad(msg):
            raise InvalidConfigurationError(msg)
        if self.regularizer_family not in FAMILIES:
            bad(f"regularizer_family must be one of {FAMILIES}")
        if not 0.0 <= self.theta <= 1.0:
            bad(f"theta must lie in [0, 1], got {self.theta}")
        if not 0.0 < self.wbc_min <= 1.0:
            bad(f"wbc_min must lie in (0, 1], got {self.wbc_min}")
        if not 0.0 <= self.gamma <= 1.0:
            bad(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.eta is None or self.eta < 0:
            bad("eta must be >= 0")
        if self.n_critics < 1 or self.batch_size < 1 or self.total_iterations < 0:
            bad("n_critics and batch_size must be >= 1, total_iterations >= 0")
        if not 0.0 < self.polyak_tau <= 1.0:
            bad("polyak_tau must lie in (0, 1]")
        if self.diffusion_schedule not in SCHEDULES:
            bad(f"diffusion_schedule must be one of {tuple(SCHEDULES)}")
        if self.log_every < 1 or self.checkpoint_every < 0:
            bad("log_every must be >= 1 and checkpoint_every >= 0")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidConfigurationError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def config_hash(d: dict) -> str:
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ------------------------------------------------------------------- bundle

class PolicyBundle:
    """Actor, vector critics with targets, optimizer states and config."""

    def __init__(self, config: TrainConfig, spec: EnvSpec | None = None):
        self.config = config
        self.spec = spec or get_spec(config.env_name)
        self.iteration = 0
        self.metadata: dict = {}
        rng = np.random.default_rng([config.seed, 0])
        s, n, a = self.spec.state_dim, self.spec.n_objectives, self.spec.action_dim
        kwargs = dict(hidden=config.hidden, rng=rng, activation=config.activation,
                      action_low=self.spec.action_low, action_high=self.spec.action_high)
        if config.regularizer_family == "diffusion":
            kwargs["schedule"] = SCHEDULES[config.diffusion_schedule](config.diffusion_steps)
        if config.regularizer_family == "cvae":
            kwargs["latent_dim"] = config.latent_dim
        self.actor = make_actor(config.regularizer_family, s, n, a, **kwargs)
        self.critics = [self._critic(rng, k) for k in range(config.n_critics)]
        self.target_critics = [c.copy(name=f"target_critic{k}") for k, c in enumerate(self.critics)]
        self.actor_opt = OptimizerState.for_params(self.actor.params, learning_rate=config.actor_lr)
        self.critic_opt = OptimizerState.for_params(self.critic_params, learning_rate=config.critic_lr)

    def _critic(self, rng, k) -> Mlp:
        s, n, a = self.spec.state_dim, self.spec.n_objectives, self.spec.action_dim
        cfg = MlpConfig((s + a + n + 1, *self.config.hidden, n), self.config.activation)
        return Mlp(cfg, rng, f"critic{k}")

    @property
    def n_objectives(self) -> int:
        return self.spec.n_objectives

    @property
    def critic_params(self):
        return [p for c in self.critics for p in c.params]

    def named_params(self):
        out = [(p.name, p.data) for p in self.actor.params]
        for k, nets in enumerate((self.critics, self.target_critics)):
            prefix = "target." if k else ""
            out += [(prefix + p.name, p.data) for c in nets for p in c.params]
        return out

    def all_params(self):
        return self.actor.params + self.critic_params + [p for c in self.target_critics for p in c.params]

    def param_fingerprint(self) -> str:
        h = hashlib.sha256()
        for _, arr in self.named_params():
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()

    def act(self, states, prefs, bc_weights, rng) -> np.ndarray:
        """Sample actions for raw states under preferences and bc weights."""
        prefs = np.atleast_2d(prefs)
        bc = np.broadcast_to(np.asarray(bc_weights, float), (prefs.shape[0],))
        x = actor_input(states, (1.0 - bc)[:, None] * prefs, bc)
        return self.actor.sample(x, rng)

    def header(self) -> dict:
        cfg = self.config.to_dict()
        return {"kind": "policy-bundle", "config": cfg, "config_hash": config_hash(cfg),
                "seed": self.config.seed, "iteration": self.iteration,
                "metadata": self.metadata}


def save_bundle(bundle: PolicyBundle, path):
    save_checkpoint(path, bundle.header(), bundle.named_params())


def load_bundle(path) -> PolicyBundle:
    header, blocks = load_checkpoint(path)
    if header.get("kind") != "policy-bundle":
        raise InvalidConfigurationError(f"{path} is not a policy checkpoint")
    bundle = PolicyBundle(TrainConfig.from_dict(header["config"]))
    _assign(bundle.named_params(), blocks, path)
    bundle.iteration = int(header["iteration"])
    bundle.metadata = dict(header.get("metadata") or {})
    return bundle


def _assign(targets, blocks, path):
    if [n for n, _ in targets] != [n for n, _ in blocks]:
        raise InvalidConfigurationError(f"{path}: parameter layout does not match the config")
    for (_, dst), (name, src) in zip(targets, blocks):
        if dst.shape != src.shape:
            raise InvalidConfigurationError(f"{path}: shape mismatch for {name}")
        dst[...] = src


# ------------------------------------------------------------------- losses

def critic_input(states, actions, aug_full):
    return ad.concat([ad.tensor(states), ad.tensor(actions), ad.tensor(aug_full)], 1)


def select_min_critic(values: list[np.ndarray], task_parts: np.ndarray) -> np.ndarray:
    """Index of the critic with the lowest scalarized value per row (first on ties)."""
    scal = np.stack([np.sum(v * task_parts, axis=1) for v in values], axis=0)
    return np.argmin(scal, axis=0)


def critic_targets(bundle: PolicyBundle, batch: SampleBatch, rng) -> np.ndarray:
    """Bootstrap targets ``y = r + gamma * (1 - done) * Q_target(s', a', w_hat)``."""
    cfg = bundle.config
    task, full = batch.task_parts, batch.aug_full
    x_next = actor_input(batch.next_states, task, batch.bc_weights)
    a_next = bundle.actor.sample(x_next, rng)
    inp = np.concatenate([batch.next_states, a_next, full], axis=1)
    values = [c.predict(inp) for c in bundle.target_critics]
    pick = select_min_critic(values, task)
    q_next = np.stack(values, axis=0)[pick, np.arange(len(batch))]
    y = batch.rewards + cfg.gamma * (1.0 - batch.terminals.astype(float))[:, None] * q_next
    bad = np.flatnonzero(~np.all(np.isfinite(y), axis=1))
    if bad.size:
        raise NumericalError(f"non-finite critic target at batch index {int(bad[0])}")
    return y


def critic_loss(bundle: PolicyBundle, batch: SampleBatch, rng, targets=None) -> ad.Tensor:
    """Mean over batch and critics of the squared vector error summed over objectives."""
    y = critic_targets(bundle, batch, rng) if targets is None else targets
    inp = critic_input(batch.states, batch.actions, batch.aug_full)
    total = None
    for c in bundle.critics:
        err = ad.tsum(ad.square(ad.sub(c.forward(inp), y)), axis=1)
        term = ad.tmean(err)
        total = term if total is None else ad.add(total, term)
    return ad.mul(total, 1.0 / len(bundle.critics))


def ensemble_q(bundle: PolicyBundle, states, actions: ad.Tensor, aug_full, task_parts) -> ad.Tensor:
    """Critic values at taped actions with frozen weights, min-scalarized selection."""
    inp = critic_input(states, actions, aug_full)
    outs = [c.forward(inp, track_params=False) for c in bundle.critics]
    if len(outs) == 1:
        return outs[0]
    pick = select_min_critic([o.data for o in outs], task_parts)
    q = outs[-1]
    for k in range(len(outs) - 2, -1, -1):
        q = ad.where((pick == k)[:, None], outs[k], q)
    return q


def actor_loss_terms(bundle: PolicyBundle, batch: SampleBatch, rng):
    """Per-sample ``(q_term, bc_term)`` tensors with ``loss = mean(-q + bc)``."""
    cfg = bundle.config
    task, full = batch.task_parts, batch.aug_full
    x = actor_input(batch.states, task, batch.bc_weights)
    a_pi = bundle.actor.act(x, rng)
    q = ensemble_q(bundle, batch.states, a_pi, full, task)
    q_term = ad.tsum(ad.mul(q, task), axis=1)
    bc = bundle.actor.bc_loss_per_sample(x, batch.actions, rng)
    bc_term = ad.mul(bc, cfg.eta * batch.bc_weights)
    return q_term, bc_term


def actor_loss(bundle: PolicyBundle, batch: SampleBatch, rng) -> ad.Tensor:
    q_term, bc_term = actor_loss_terms(bundle, batch, rng)
    return ad.tmean(ad.sub(bc_term, q_term))


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    bundle: PolicyBundle
    log: list = field(default_factory=list)


def _check_dataset(config: TrainConfig, ds: OfflineDataset):
    if ds.env_name != config.env_name:
        raise InvalidConfigurationError(
            f"dataset was generated on {ds.env_name!r}, config expects {config.env_name!r}")
    if len(ds) == 0:
        raise InvalidConfigurationError("cannot train on an empty dataset")


def train_step(bundle: PolicyBundle, batch: SampleBatch, rng):
    """One actor update, one critic update, then a Polyak step on the targets."""
    zero_grad(bundle.actor.params)
    a_loss = actor_loss(bundle, batch, rng)
    ad.backward(a_loss)
    adam_step(bundle.actor_opt, bundle.actor.params)
    zero_grad(bundle.critic_params)
    c_loss = critic_loss(bundle, batch, rng)
    ad.backward(c_loss)
    adam_step(bundle.critic_opt, bundle.critic_params)
    for t, c in zip(bundle.target_critics, bundle.critics):
        polyak_update(t.params, c.params, bundle.config.polyak_tau)
    bundle.iteration += 1
    return float(a_loss.data), float(c_loss.data)


def train(config: TrainConfig, ds: OfflineDataset, log_path=None, checkpoint_dir=None,
          bundle: PolicyBundle | None = None, step_fn=None) -> TrainResult:
    """Run ``config.total_iterations`` updates; fully determined by ``config.seed``.

    Losses are logged every ``log_every`` iterations. A non-finite loss or
    gradient aborts with ``TrainingDivergedError`` carrying a snapshot.
    """
    _check_dataset(config, ds)
    bundle = bundle or PolicyBundle(config)
    rng = np.random.default_rng([config.seed, 1])
    step_fn = step_fn or train_step
    log = []
    acc = np.zeros(3)
    count = 0
    start = time.perf_counter()
    for it in range(1, config.total_iterations + 1):
        batch = sample_batch(ds, config.batch_size, config.theta, config.wbc_min, rng)
        try:
            a_loss, c_loss = step_fn(bundle, batch, rng)
        except (NonFiniteGradientError, NumericalError) as exc:
            raise TrainingDivergedError(f"iteration {it}: {exc}",
                                        {"iteration": it, "log_tail": log[-5:],
                                         "error": str(exc)}) from exc
        if not (np.isfinite(a_loss) and np.isfinite(c_loss)):
            raise TrainingDivergedError(
                f"iteration {it}: non-finite loss", {"iteration": it, "actor_loss": a_loss,
                                                     "critic_loss": c_loss, "log_tail": log[-5:]})
        acc += (c_loss, a_loss, batch.bc_weights.mean())
        count += 1
        if it % config.log_every == 0 or it == config.total_iterations:
            c_mean, a_mean, w_mean = acc / count
            log.append({"iteration": it, "critic_loss": c_mean, "actor_loss": a_mean,
                        "mean_wbc": w_mean, "wall_ms": (time.perf_counter() - start) * 1e3})
            acc[:] = 0.0
            count = 0
        if checkpoint_dir and config.checkpoint_every and it % config.checkpoint_every == 0:
            save_bundle(bundle, Path(checkpoint_dir) / f"ckpt_{it:08d}.bin")
    bundle.metadata["trained_on"] = {"env": ds.env_name, "n_trajectories": len(ds)}
    if log_path is not None:
        write_log(log_path, log)
    return TrainResult(bundle, log)


def write_log(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(r[k])) if k != "iteration" else r[k] for k in LOG_COLUMNS})


# --------------------------------------------------------------- evaluation

def _resolve_wbc(wbc, prefs) -> np.ndarray:
    if callable(wbc):
        return np.array([float(wbc(p)) for p in prefs])
    if isinstance(wbc, dict):
        return np.array([float(wbc[p]) for p in prefs])
    arr = np.asarray(wbc, dtype=float)
    if arr.ndim == 0:
        return np.full(len(prefs), float(arr))
    if arr.shape != (len(prefs),):
        raise InvalidConfigurationError("per-preference bc weights must match the grid size")
    return arr


def rollout_returns(bundle: PolicyBundle, prefs: np.ndarray, bc_weights: np.ndarray,
                    rng) -> np.ndarray:
    """One episode per row of ``prefs``/``bc_weights``, run in lockstep."""
    prefs = np.atleast_2d(prefs)
    bc = np.asarray(bc_weights, dtype=float)

    def act(obs, idx):
        return bundle.act(obs, prefs[idx], bc[idx], rng)

    return rollout(bundle.spec, act, prefs.shape[0]).returns


def evaluate_policy(bundle: PolicyBundle, n_prefs: int = 101, episodes_per_pref: int = 5,
                    adapted_wbc=None, seed: int = 0, prefs=None):
    """Mean undiscounted return per grid preference.

    ``adapted_wbc`` is a constant, a per-preference array, a dict keyed by
    ``Preference`` or a callable; it defaults to the midpoint of ``[wbc_min, 1]``.
    All episodes run in one lockstep batch whose randomness is fixed by ``seed``.
    """
    if prefs is None:
        prefs = preference_grid(bundle.n_objectives, n_prefs)
    if adapted_wbc is None:
        adapted_wbc = 0.5 * (bundle.config.wbc_min + 1.0)
    wbc = _resolve_wbc(adapted_wbc, prefs)
    w = np.array([as_vector(p) for p in prefs])
    rows = np.repeat(w, episodes_per_pref, axis=0)
    bc = np.repeat(wbc, episodes_per_pref)
    rng = np.random.default_rng([seed, 2])
    rets = rollout_returns(bundle, rows, bc, rng)
    means = rets.reshape(len(prefs), episodes_per_pref, -1).mean(axis=1)
    return [(p if isinstance(p, Preference) else Preference(p), m) for p, m in zip(prefs, means)]
