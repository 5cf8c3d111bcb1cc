"""Baselines: multi-objective conservative Q-learning and preference-conditioned
behavior cloning. Both condition on the plain preference, not an augmented one.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .dataset import OfflineDataset, SampleBatch
from .envs import EnvSpec, get_spec
from .errors import InvalidConfigurationError
from .nn import Mlp, MlpConfig, OptimizerState, adam_step, load_checkpoint, polyak_update, zero_grad
from .trainer import (PolicyBundle, TrainResult, _assign, _train_default, config_hash,
                      critic_input, load_bundle, select_min_critic, train)

LOG_STD_BOUNDS = (-5.0, 2.0)


@dataclass(frozen=True)
class _BaselineConfig:
    env_name: str
    theta: float = 0.0
    gamma: float = field(default_factory=lambda: _train_default("gamma"))
    batch_size: int = field(default_factory=lambda: _train_default("batch_size", int))
    total_iterations: int = field(default_factory=lambda: _train_default("total_iterations", int))
    seed: int = 0
    actor_lr: float = field(default_factory=lambda: _train_default("actor_lr"))
    critic_lr: float = field(default_factory=lambda: _train_default("critic_lr"))
    hidden: tuple = field(default_factory=lambda: _train_default("hidden", tuple))
    activation: str = field(default_factory=lambda: _train_default("activation", str))
    log_every: int = field(default_factory=lambda: _train_default("log_every", int))
    checkpoint_every: int = 0
    # the batch sampler draws bc weights; baselines ignore them
    wbc_min: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0.0 <= self.theta <= 1.0:
            raise InvalidConfigurationError(f"theta must lie in [0, 1], got {self.theta}")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidConfigurationError("gamma must lie in [0, 1]")
        if self.batch_size < 1 or self.total_iterations < 0 or self.log_every < 1:
            raise InvalidConfigurationError("batch_size, total_iterations or log_every out of range")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidConfigurationError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _default_alpha() -> float:
    from .trainer import load_defaults
    return load_defaults().getfloat("mo-cql", "alpha")


@dataclass(frozen=True)
class CqlConfig(_BaselineConfig):
    alpha: float = field(default_factory=_default_alpha)
    n_critics: int = field(default_factory=lambda: _train_default("n_critics", int))
    polyak_tau: float = field(default_factory=lambda: _train_default("polyak_tau"))

    def __post_init__(self):
        super().__post_init__()
        if self.alpha < 0:
            raise InvalidConfigurationError("alpha must be >= 0")
        if self.n_critics < 1 or not 0 < self.polyak_tau <= 1:
            raise InvalidConfigurationError("n_critics must be >= 1 and polyak_tau in (0, 1]")


@dataclass(frozen=True)
class BcpConfig(_BaselineConfig):
    pass


class _BaselineBundle:
    kind = ""

    def __init__(self, config, spec: EnvSpec | None = None):
        self.config = config
        self.spec = spec or get_spec(config.env_name)
        self.iteration = 0
        self.metadata: dict = {}

    @property
    def n_objectives(self) -> int:
        return self.spec.n_objectives

    def _scale(self, a):
        lo, hi = self.spec.action_low, self.spec.action_high
        return 0.5 * (hi - lo) * a + 0.5 * (hi + lo)

    def header(self) -> dict:
        cfg = self.config.to_dict()
        return {"kind": self.kind, "config": cfg, "config_hash": config_hash(cfg),
                "seed": self.config.seed, "iteration": self.iteration, "metadata": self.metadata}


# ------------------------------------------------------------------- MO-CQL

class CqlBundle(_BaselineBundle):
    """Tanh-squashed Gaussian actor and vector critics conditioned on ``[s | w]``."""

    kind = "mo-cql"

    def __init__(self, config: CqlConfig, spec: EnvSpec | None = None):
        super().__init__(config, spec)
        rng = np.random.default_rng([config.seed, 0])
        s, n, a = self.spec.state_dim, self.spec.n_objectives, self.spec.action_dim
        h, act = config.hidden, config.activation
        self.actor = Mlp(MlpConfig((s + n, *h, 2 * a), act), rng, "cql.actor")
        self.critics = [Mlp(MlpConfig((s + a + n, *h, n), act), rng, f"cql.critic{k}")
                        for k in range(config.n_critics)]
        self.target_critics = [c.copy(name=f"cql.target{k}") for k, c in enumerate(self.critics)]
        self.actor_opt = OptimizerState.for_params(self.actor.params, learning_rate=config.actor_lr)
        self.critic_opt = OptimizerState.for_params(self.critic_params, learning_rate=config.critic_lr)

    @property
    def critic_params(self):
        return [p for c in self.critics for p in c.params]

    def named_params(self):
        out = [(p.name, p.data) for p in self.actor.params]
        out += [(p.name, p.data) for c in self.critics for p in c.params]
        out += [(p.name, p.data) for c in self.target_critics for p in c.params]
        return out

    def policy(self, states, prefs, rng, track_params=True) -> ad.Tensor:
        """Reparameterized tanh-Gaussian action sample."""
        a_dim = self.spec.action_dim
        h = self.actor.forward(np.concatenate([states, prefs], axis=1), track_params)
        mean = ad.getitem(h, (slice(None), slice(0, a_dim)))
        log_std = ad.clip(ad.getitem(h, (slice(None), slice(a_dim, 2 * a_dim))), *LOG_STD_BOUNDS)
        eps = rng.standard_normal(mean.shape)
        return ad.tanh(ad.add(mean, ad.mul(ad.exp(log_std), eps)))

    def sample_np(self, states, prefs, rng) -> np.ndarray:
        a_dim = self.spec.action_dim
        h = self.actor.predict(np.concatenate([states, prefs], axis=1))
        log_std = np.clip(h[:, a_dim:], *LOG_STD_BOUNDS)
        return np.tanh(h[:, :a_dim] + np.exp(log_std) * rng.standard_normal((h.shape[0], a_dim)))

    def act(self, states, prefs, bc_weights, rng) -> np.ndarray:
        """Deterministic evaluation action ``tanh(mean)``; bc weights are ignored."""
        prefs = np.atleast_2d(prefs)
        h = self.actor.predict(np.concatenate([np.atleast_2d(states), prefs], axis=1))
        return self._scale(np.tanh(h[:, :self.spec.action_dim]))


def _scal(q: ad.Tensor, prefs) -> ad.Tensor:
    return ad.tsum(ad.mul(q, prefs), axis=1)


def mo_cql_losses(bundle: CqlBundle, batch: SampleBatch, alpha: float, rng,
                  policy_actions=None):
    """Returns ``(actor_loss, critic_loss)``.

    The critic loss is the vector Bellman error plus
    ``alpha * mean(w.Q(s, a_pi) - w.Q(s, a_data))`` with one policy action per
    state; ``policy_actions`` overrides that sample (useful for tests).
    """
    cfg = bundle.config
    w = batch.prefs
    # actor: maximize scalarized value through frozen critics
    a_pi = bundle.policy(batch.states, w, rng)
    ins = critic_input(batch.states, a_pi, w)
    outs = [c.forward(ins, track_params=False) for c in bundle.critics]
    pick = select_min_critic([o.data for o in outs], w)
    q = outs[-1]
    for k in range(len(outs) - 2, -1, -1):
        q = ad.where((pick == k)[:, None], outs[k], q)
    a_loss = ad.neg(ad.tmean(_scal(q, w)))

    # critic: Bellman targets from target nets at a fresh policy action
    a_next = bundle.sample_np(batch.next_states, w, rng)
    nxt = np.concatenate([batch.next_states, a_next, w], axis=1)
    values = [c.predict(nxt) for c in bundle.target_critics]
    sel = select_min_critic(values, w)
    q_next = np.stack(values)[sel, np.arange(len(batch))]
    y = batch.rewards + cfg.gamma * (1.0 - batch.terminals.astype(float))[:, None] * q_next
    if policy_actions is None:
        policy_actions = bundle.sample_np(batch.states, w, rng)
    data_in = critic_input(batch.states, batch.actions, w)
    pol_in = critic_input(batch.states, policy_actions, w)
    total = None
    for c in bundle.critics:
        q_data = c.forward(data_in)
        bellman = ad.tmean(ad.tsum(ad.square(ad.sub(q_data, y)), axis=1))
        term = bellman
        if alpha:
            gap = ad.tmean(ad.sub(_scal(c.forward(pol_in), w), _scal(q_data, w)))
            term = ad.add(bellman, ad.mul(gap, alpha))
        total = term if total is None else ad.add(total, term)
    c_loss = ad.mul(total, 1.0 / len(bundle.critics))
    return a_loss, c_loss


def cql_step(bundle: CqlBundle, batch: SampleBatch, rng):
    zero_grad(bundle.actor.params)
    zero_grad(bundle.critic_params)
    a_loss, c_loss = mo_cql_losses(bundle, batch, bundle.config.alpha, rng)
    ad.backward(a_loss)
    adam_step(bundle.actor_opt, bundle.actor.params)
    ad.backward(c_loss)
    adam_step(bundle.critic_opt, bundle.critic_params)
    for t, c in zip(bundle.target_critics, bundle.critics):
        polyak_update(t.params, c.params, bundle.config.polyak_tau)
    bundle.iteration += 1
    return float(a_loss.data), float(c_loss.data)


def train_mo_cql(config: CqlConfig, ds: OfflineDataset, **kwargs) -> TrainResult:
    return train(config, ds, bundle=CqlBundle(config), step_fn=cql_step, **kwargs)


# --------------------------------------------------------------------- BC(P)

class BcpBundle(_BaselineBundle):
    """Deterministic actor on ``[s | behavior preference]`` trained by regression."""

    kind = "bc-p"

    def __init__(self, config: BcpConfig, spec: EnvSpec | None = None):
        super().__init__(config, spec)
        rng = np.random.default_rng([config.seed, 0])
        s, n, a = self.spec.state_dim, self.spec.n_objectives, self.spec.action_dim
        self.actor = Mlp(MlpConfig((s + n, *config.hidden, a), config.activation, "tanh"),
                         rng, "bcp.actor")
        self.actor_opt = OptimizerState.for_params(self.actor.params, learning_rate=config.actor_lr)

    def named_params(self):
        return [(p.name, p.data) for p in self.actor.params]

    def act(self, states, prefs, bc_weights, rng) -> np.ndarray:
        prefs = np.atleast_2d(prefs)
        return self._scale(self.actor.predict(np.concatenate([np.atleast_2d(states), prefs], 1)))


def bc_p_loss(actor: Mlp, states, actions, behavior_prefs) -> ad.Tensor:
    """Action regression error averaged over dimensions and batch."""
    pred = actor.forward(np.concatenate([np.atleast_2d(states), np.atleast_2d(behavior_prefs)], 1))
    return ad.tmean(ad.square(ad.sub(pred, np.atleast_2d(actions))))


def bcp_step(bundle: BcpBundle, batch: SampleBatch, rng):
    zero_grad(bundle.actor.params)
    lo, hi = bundle.spec.action_low, bundle.spec.action_high
    target = (batch.actions - 0.5 * (hi + lo)) / (0.5 * (hi - lo))
    loss = bc_p_loss(bundle.actor, batch.states, target, batch.behavior_prefs)
    ad.backward(loss)
    adam_step(bundle.actor_opt, bundle.actor.params)
    bundle.iteration += 1
    value = float(loss.data)
    return value, 0.0


def train_bc_p(config: BcpConfig, ds: OfflineDataset, **kwargs) -> TrainResult:
    return train(config, ds, bundle=BcpBundle(config), step_fn=bcp_step, **kwargs)


# ------------------------------------------------------------- checkpoints

def load_any_bundle(path):
    """Load a policy, MO-CQL or BC(P) checkpoint by its header kind."""
    header, blocks = load_checkpoint(path)
    kind = header.get("kind")
    if kind == "policy-bundle":
        return load_bundle(path)
    classes = {"mo-cql": (CqlBundle, CqlConfig), "bc-p": (BcpBundle, BcpConfig)}
    if kind not in classes:
        raise InvalidConfigurationError(f"{path}: unknown checkpoint kind {kind!r}")
    bundle_cls, cfg_cls = classes[kind]
    bundle = bundle_cls(cfg_cls.from_dict(header["config"]))
    _assign(bundle.named_params(), blocks, path)
    bundle.iteration = int(header["iteration"])
    bundle.metadata = dict(header.get("metadata") or {})
    return bundle


__all__ = ["CqlConfig", "BcpConfig", "CqlBundle", "BcpBundle", "mo_cql_losses", "bc_p_loss",
           "train_mo_cql", "train_bc_p", "load_any_bundle", "PolicyBundle"]
