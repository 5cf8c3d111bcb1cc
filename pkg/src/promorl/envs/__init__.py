"""Toy multi-objective environments with exact Pareto fronts.

Environments are value-semantic: ``step`` takes an ``EnvState`` and returns a
new one. ``rollout`` runs many episodes in lockstep for dataset generation
and policy evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import Preference, Trajectory, as_vector
from ..errors import IllegalTransitionError, InvalidArgumentError, UnsupportedError
from . import lineworld
from .treasure import ACTION_VECTORS, TreasureGrid, default_grid

ENV_NAMES = ("mo-lineworld", "mo-treasure")


@dataclass(frozen=True, eq=False)
class EnvSpec:
    name: str
    n_objectives: int
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    horizon: int
    reward_bounds: np.ndarray  # (n_objectives, 2) per-step [low, high]

    def __post_init__(self):
        if self.horizon < 1 or self.n_objectives < 2:
            raise InvalidArgumentError("horizon must be >= 1 and n_objectives >= 2")
        if np.any(np.asarray(self.action_low) >= np.asarray(self.action_high)):
            raise InvalidArgumentError("action_low must be below action_high")

    def clip_action(self, a: np.ndarray) -> np.ndarray:
        return np.clip(a, self.action_low, self.action_high)


@dataclass(frozen=True, eq=False)
class EnvState:
    """Observation plus the hidden coordinate; dynamics ignore ``seed``."""

    observation: np.ndarray
    step_count: int
    internal: float
    terminal: bool = False
    seed: int = 0


class _Adapter:
    """Uniform batched interface over the two environment implementations."""

    def __init__(self, spec: EnvSpec, init, observe, dynamics, oracle, expert):
        self.spec = spec
        self.init = init
        self.observe = observe
        self.dynamics = dynamics
        self.oracle = oracle
        self.expert = expert


def _lineworld() -> _Adapter:
    spec = EnvSpec("mo-lineworld", 2, 2, 1, np.array([-1.0]), np.array([1.0]),
                   lineworld.HORIZON, np.array([[0.0, 1.0], [0.0, 1.0]]))
    return _Adapter(spec, lineworld.initial_internal, lineworld.observe, lineworld.dynamics,
                    lineworld.oracle_front,
                    lambda w, obs: lineworld.expert_actions(w, obs[:, 0], None))


def _treasure(grid: TreasureGrid) -> _Adapter:
    spec = EnvSpec("mo-treasure", 2, 3, 2, np.array([-1.0, -1.0]), np.array([1.0, 1.0]),
                   grid.horizon,
                   np.array([[0.0, grid.max_value], [0.0, 0.05 * grid.horizon]]))
    return _Adapter(spec, lambda n: np.full(n, grid.start), grid.observe, grid.dynamics,
                    grid.oracle_front, grid.expert_actions)


_CACHE: dict = {}


def _adapter(name: str) -> _Adapter:
    if name not in _CACHE:
        if name == "mo-lineworld":
            _CACHE[name] = _lineworld()
        elif name == "mo-treasure":
            _CACHE[name] = _treasure(default_grid())
        else:
            raise InvalidArgumentError(f"unknown environment {name!r}; choose from {ENV_NAMES}")
    return _CACHE[name]


def get_spec(name: str) -> EnvSpec:
    return _adapter(name).spec


def make_env(name: str, seed: int = 0) -> tuple[EnvSpec, EnvState]:
    env = _adapter(name)
    internal = env.init(1)
    obs = env.observe(internal, np.zeros(1))[0]
    return env.spec, EnvState(obs, 0, internal[0].item(), False, int(seed))


def step(spec: EnvSpec, state: EnvState, action) -> tuple[EnvState, np.ndarray, bool]:
    """Advance one step; out-of-bounds actions are clipped."""
    if state.terminal or state.step_count >= spec.horizon:
        raise IllegalTransitionError("cannot step a terminal state")
    env = _adapter(spec.name)
    a = np.asarray(action, dtype=float).reshape(1, spec.action_dim)
    a = spec.clip_action(a)
    internal = np.array([state.internal], dtype=type(state.internal))
    t = np.array([state.step_count])
    new_internal, reward, terminal = env.dynamics(internal, t, a)
    obs = env.observe(new_internal, t + 1)[0]
    done = bool(terminal[0])
    new_state = EnvState(obs, state.step_count + 1, new_internal[0].item(), done, state.seed)
    return new_state, reward[0], done


def oracle_pareto_front(spec: EnvSpec) -> np.ndarray:
    """Exact set of non-dominated undiscounted episode returns, one row per point."""
    if spec.name not in ENV_NAMES:
        raise UnsupportedError(f"no oracle for environment {spec.name!r}")
    return _adapter(spec.name).oracle()


def decode_discrete(spec: EnvSpec, actions: np.ndarray) -> np.ndarray:
    """Map continuous actions onto the canonical action vectors of a discrete env."""
    if spec.name != "mo-treasure":
        return actions
    return ACTION_VECTORS[TreasureGrid.decode(actions)]


# ------------------------------------------------------------ scripted policies

@dataclass(frozen=True, eq=False)
class ScriptedBehaviorPolicy:
    preference: Preference
    noise_scale: float = 0.0
    quality: str = "expert"

    def __post_init__(self):
        if self.quality not in ("expert", "amateur"):
            raise InvalidArgumentError(f"quality must be expert or amateur, got {self.quality!r}")
        if self.noise_scale < 0 or (self.quality == "amateur" and self.noise_scale <= 0):
            raise InvalidArgumentError("amateur policies need noise_scale > 0")


def truncated_noise(rng: np.random.Generator, shape, scale: float, bound: float = 2.0):
    """Gaussian noise restricted to +-bound standard deviations by rejection."""
    z = rng.standard_normal(shape)
    bad = np.abs(z) > bound
    while np.any(bad):
        z[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(z) > bound
    return scale * z


def scripted_actions(spec: EnvSpec, prefs: np.ndarray, noise: np.ndarray,
                     obs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Batched scripted behavior: expert action plus per-row truncated noise."""
    prefs = np.atleast_2d(prefs)
    if prefs.shape[1] != spec.n_objectives:
        raise InvalidArgumentError("preference dimension does not match the environment")
    a = _adapter(spec.name).expert(prefs, np.atleast_2d(obs))
    noise = np.broadcast_to(np.asarray(noise, float), (a.shape[0],))
    if np.any(noise > 0):
        a = a + truncated_noise(rng, a.shape, 1.0) * noise[:, None]
    return spec.clip_action(a)


def scripted_action(policy: ScriptedBehaviorPolicy, spec: EnvSpec, state: EnvState,
                    rng: np.random.Generator) -> np.ndarray:
    w = as_vector(policy.preference)
    scale = policy.noise_scale if policy.quality == "amateur" else 0.0
    return scripted_actions(spec, w[None], np.array([scale]), state.observation[None], rng)[0]


# ------------------------------------------------------------------- rollouts

@dataclass
class RolloutResult:
    returns: np.ndarray
    trajectories: list = field(default_factory=list)


def rollout(spec: EnvSpec, act_fn, n_episodes: int, record: bool = False) -> RolloutResult:
    """Run ``n_episodes`` from the start state in lockstep.

    ``act_fn(obs, idx)`` receives observations of the still-running episodes
    and their indices and returns one action row per episode.
    """
    env = _adapter(spec.name)
    internal = env.init(n_episodes)
    t = np.zeros(n_episodes, dtype=int)
    active = np.ones(n_episodes, dtype=bool)
    returns = np.zeros((n_episodes, spec.n_objectives))
    logs = [[] for _ in range(n_episodes)] if record else None
    while np.any(active):
        idx = np.flatnonzero(active)
        obs = env.observe(internal[idx], t[idx])
        a = spec.clip_action(np.asarray(act_fn(obs, idx), dtype=float).reshape(idx.size, spec.action_dim))
        new_internal, r, term = env.dynamics(internal[idx], t[idx], a)
        internal[idx] = new_internal
        t[idx] += 1
        returns[idx] += r
        if record:
            next_obs = env.observe(new_internal, t[idx])
            for k, i in enumerate(idx):
                logs[i].append((obs[k], a[k], r[k], next_obs[k], bool(term[k])))
        active[idx[term]] = False
    trajs = []
    if record:
        for steps in logs:
            s, a, r, s2, d = zip(*steps)
            trajs.append(Trajectory(np.array(s), np.array(a), np.array(r), np.array(s2), np.array(d)))
    return RolloutResult(returns, trajs)
