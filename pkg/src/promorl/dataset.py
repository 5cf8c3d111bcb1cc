"""Offline datasets: generation, persistence, behavior-preference annotation,
preference filtering and the preference-aware mini-batch sampler.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import (AugmentedPreference, Preference, Trajectory, Transition, as_vector,
                   cosine_distances, l1_normalize)
from .envs import EnvSpec, get_spec, rollout, scripted_actions
from .errors import (DegenerateReturnError, IntegrityError, InvalidArgumentError,
                     ParseError)

FORMAT_VERSION = 1
SHIFT_EPS = 1e-6
FILTER_TOL = 1e-12
CAP_RETRIES = 10_000


def default_shift(returns: np.ndarray) -> np.ndarray:
    """Per-objective offset that makes every episode return normalizable.

    Objectives with a negative minimum are lifted to ``1e-6`` above zero. If
    some return is then still all-zero, every objective gets ``1e-6`` more so
    the normalization stays defined.
    """
    returns = np.atleast_2d(returns)
    mins = returns.min(axis=0)
    shift = np.where(mins < 0, -mins + SHIFT_EPS, 0.0)
    shifted = returns + shift
    if np.any(np.all(shifted <= 0, axis=1)):
        shift = shift + SHIFT_EPS
    return shift


def approx_behavior_pref(traj: Trajectory, shift=None) -> Preference:
    """L1-normalized (shifted) episode return."""
    ret = np.asarray(traj.episode_return, dtype=float)
    if shift is not None:
        ret = ret + np.asarray(shift, dtype=float)
    return l1_normalize(ret)


@dataclass(frozen=True, eq=False)
class OfflineDataset:
    trajectories: tuple
    approx_prefs: np.ndarray
    env_name: str
    objective_shift: np.ndarray
    metadata: dict = field(default_factory=dict)
    warning: str | None = None

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        object.__setattr__(self, "trajectories", trajs)
        shift = np.array(self.objective_shift, dtype=float)
        shift.setflags(write=False)
        object.__setattr__(self, "objective_shift", shift)
        prefs = np.array(self.approx_prefs, dtype=float).reshape(len(trajs), shift.size)
        prefs.setflags(write=False)
        object.__setattr__(self, "approx_prefs", prefs)
        if any(t.n_objectives != shift.size for t in trajs):
            raise IntegrityError("all trajectories must share the objective count")
        for i, t in enumerate(trajs):
            expected = approx_behavior_pref(t, shift).weights
            if np.max(np.abs(expected - prefs[i])) > 1e-9:
                raise IntegrityError(f"trajectory {i}: approx_pref does not match its return")

    def __len__(self):
        return len(self.trajectories)

    @property
    def n_objectives(self) -> int:
        return self.objective_shift.size

    @property
    def returns(self) -> np.ndarray:
        if not self.trajectories:
            return np.zeros((0, self.n_objectives))
        return np.array([t.episode_return for t in self.trajectories])

    @cached_property
    def flat(self) -> dict:
        """Transition columns concatenated over trajectories, for batch sampling."""
        if not self.trajectories:
            raise InvalidArgumentError("dataset is empty")
        cols = {k: np.concatenate([getattr(t, k) for t in self.trajectories])
                for k in ("states", "actions", "rewards", "next_states", "terminals")}
        cols["traj_index"] = np.concatenate(
            [np.full(len(t), i) for i, t in enumerate(self.trajectories)])
        return cols

    @property
    def n_transitions(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def subset(self, indices, warning=None) -> "OfflineDataset":
        idx = [int(i) for i in indices]
        return OfflineDataset(tuple(self.trajectories[i] for i in idx),
                              self.approx_prefs[idx] if idx else np.zeros((0, self.n_objectives)),
                              self.env_name, self.objective_shift, dict(self.metadata), warning)

    def __eq__(self, other):
        if not isinstance(other, OfflineDataset):
            return NotImplemented
        return (self.env_name == other.env_name
                and np.array_equal(self.objective_shift, other.objective_shift)
                and np.array_equal(self.approx_prefs, other.approx_prefs)
                and self.trajectories == other.trajectories)

    __hash__ = None


def build_dataset(trajectories, env_name: str, shift=None, metadata=None) -> OfflineDataset:
    """Annotate trajectories with their approximate behavior preferences."""
    trajectories = tuple(trajectories)
    if not trajectories:
        raise InvalidArgumentError("need at least one trajectory")
    returns = np.array([t.episode_return for t in trajectories])
    shift = default_shift(returns) if shift is None else np.asarray(shift, dtype=float)
    prefs = np.array([approx_behavior_pref(t, shift).weights for t in trajectories])
    return OfflineDataset(trajectories, prefs, env_name, shift, dict(metadata or {}))


# ------------------------------------------------------------------ generation

def parse_pref_sampler(sampler):
    """Accepts ``uniform-simplex``/``uniform``, ``corner-mixture``/``corners``,
    ``fixed:1,0`` or a ``Preference``."""
    if isinstance(sampler, Preference):
        return ("fixed", sampler.weights)
    if isinstance(sampler, str):
        if sampler in ("uniform-simplex", "uniform"):
            return ("uniform", None)
        if sampler in ("corner-mixture", "corners"):
            return ("corners", None)
        if sampler.startswith("fixed:"):
            try:
                w = [float(x) for x in sampler[len("fixed:"):].split(",")]
            except ValueError:
                raise InvalidArgumentError(f"bad fixed preference {sampler!r}") from None
            return ("fixed", Preference(w).weights)
    raise InvalidArgumentError(f"unknown preference sampler {sampler!r}")


def _draw_prefs(kind, fixed, n_traj, n, rng) -> np.ndarray:
    if kind == "uniform":
        return rng.dirichlet(np.ones(n), size=n_traj)
    if kind == "corners":
        return np.eye(n)[rng.integers(0, n, size=n_traj)]
    if fixed.size != n:
        raise InvalidArgumentError("fixed preference dimension does not match the environment")
    return np.repeat(fixed[None], n_traj, axis=0)


def generate_dataset(spec: EnvSpec | str, n_traj: int, quality_mix: float = 1.0,
                     noise_scale: float = 0.0, pref_sampler="uniform-simplex",
                     seed: int = 0, shift=None) -> OfflineDataset:
    """Roll out scripted behavior policies and annotate each trajectory.

    A ``quality_mix`` fraction (rounded) of the trajectories is expert; the
    rest are amateur rollouts with truncated Gaussian action noise.
    """
    spec = get_spec(spec) if isinstance(spec, str) else spec
    if n_traj < 1:
        raise InvalidArgumentError("n_traj must be >= 1")
    if not 0.0 <= quality_mix <= 1.0:
        raise InvalidArgumentError("quality_mix must lie in [0, 1]")
    n_expert = int(round(quality_mix * n_traj))
    if n_expert < n_traj and noise_scale <= 0:
        raise InvalidArgumentError("amateur trajectories need noise_scale > 0")
    kind, fixed = parse_pref_sampler(pref_sampler)
    rng = np.random.default_rng(seed)
    prefs = _draw_prefs(kind, fixed, n_traj, spec.n_objectives, rng)
    expert = np.zeros(n_traj, dtype=bool)
    expert[rng.permutation(n_traj)[:n_expert]] = True
    noise = np.where(expert, 0.0, noise_scale)

    def act(obs, idx):
        return scripted_actions(spec, prefs[idx], noise[idx], obs, rng)

    result = rollout(spec, act, n_traj, record=True)
    meta = {"seed": int(seed), "quality_mix": float(quality_mix), "noise_scale": float(noise_scale),
            "pref_sampler": pref_sampler if isinstance(pref_sampler, str)
            else "fixed:" + ",".join(map(repr, fixed.tolist())),
            "behavior_prefs": prefs.tolist(), "expert": expert.tolist()}
    return build_dataset(result.trajectories, spec.name, shift, meta)


# ------------------------------------------------------------------- filtering

def _target_vector(ds: OfflineDataset, target) -> np.ndarray:
    w = as_vector(target)
    if w.shape != (ds.n_objectives,):
        raise InvalidArgumentError("target dimension does not match the dataset")
    return w


def filter_subdataset(ds: OfflineDataset, target, theta: float) -> OfflineDataset:
    """Trajectories whose behavior preference lies within cosine distance 2*theta."""
    if not 0.0 <= theta <= 1.0:
        raise InvalidArgumentError("theta must lie in [0, 1]")
    w = _target_vector(ds, target)
    if len(ds) == 0:
        return ds.subset([], warning="empty dataset")
    d = cosine_distances(ds.approx_prefs, w[None])
    keep = np.flatnonzero(d <= 2.0 * theta + FILTER_TOL)
    warning = None
    if keep.size == 0:
        warning = f"no trajectory within cosine distance {2 * theta} of {w.tolist()}"
        warnings.warn(warning, stacklevel=2)
    return ds.subset(keep, warning)


def ratio_subdataset(ds: OfflineDataset, target, ratio: float) -> OfflineDataset:
    """The ceil(ratio*|D|) trajectories closest to ``target``, ties by index."""
    if not 0.0 < ratio <= 1.0:
        raise InvalidArgumentError("ratio must lie in (0, 1]")
    w = _target_vector(ds, target)
    k = math.ceil(round(ratio * len(ds), 9))
    if k < 1:
        raise InvalidArgumentError("ratio * |D| must be >= 1")
    d = cosine_distances(ds.approx_prefs, w[None])
    order = np.argsort(d, kind="stable")[:k]
    return ds.subset(np.sort(order))


# -------------------------------------------------------------------- sampling

@dataclass(frozen=True, eq=False)
class SampleBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    prefs: np.ndarray           # target preferences omega, (B, n)
    bc_weights: np.ndarray      # omega_bc, (B,)
    behavior_prefs: np.ndarray  # approx behavior preference of each source trajectory
    wbc_min: float = 0.2

    def __len__(self):
        return self.states.shape[0]

    @property
    def task_parts(self) -> np.ndarray:
        return (1.0 - self.bc_weights)[:, None] * self.prefs

    @property
    def aug_full(self) -> np.ndarray:
        """Augmented preferences as (B, n+1) rows ``[task_part, bc_weight]``."""
        return np.concatenate([self.task_parts, self.bc_weights[:, None]], axis=1)

    @property
    def transitions(self) -> list[Transition]:
        return [Transition(self.states[i], self.actions[i], self.rewards[i],
                           self.next_states[i], bool(self.terminals[i])) for i in range(len(self))]

    @property
    def aug_prefs(self) -> list[AugmentedPreference]:
        return [AugmentedPreference(tp, float(b), min(self.wbc_min, float(b)))
                for tp, b in zip(self.task_parts, self.bc_weights)]


def _cap_interval_2d(centers: np.ndarray, radius: float):
    """Bounds on the first weight for the cap of cosine radius ``radius``."""
    phi = np.arctan2(centers[:, 1], centers[:, 0])
    half = np.arccos(np.clip(1.0 - radius, -1.0, 1.0))
    lo_phi = np.clip(phi - half, 0.0, np.pi / 2)
    hi_phi = np.clip(phi + half, 0.0, np.pi / 2)

    def first_weight(p):
        c, s = np.cos(p), np.sin(p)
        return c / (c + s)

    # the first weight decreases as the angle grows
    return first_weight(hi_phi), first_weight(lo_phi)


def sample_cap(centers: np.ndarray, theta: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform simplex points within cosine distance 2*theta of each center row."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    m, n = centers.shape
    radius = 2.0 * theta
    if theta == 0.0:
        return centers.copy()
    if n == 2:
        lo, hi = _cap_interval_2d(centers, radius)
        w1 = lo + (hi - lo) * rng.random(m)
        out = np.stack([w1, 1.0 - w1], axis=1)
        # rounding at the cap edge must not leak outside the predicate
        bad = cosine_distances(out, centers) > radius + FILTER_TOL
        out[bad] = centers[bad]
        return out
    out = centers.copy()
    for i in range(m):
        tries = 0
        while tries < CAP_RETRIES:
            k = min(256, CAP_RETRIES - tries)
            cand = rng.dirichlet(np.ones(n), size=k)
            ok = np.flatnonzero(cosine_distances(cand, centers[i][None]) <= radius + FILTER_TOL)
            if ok.size:
                out[i] = cand[ok[0]]
                break
            tries += k
    return out


def sample_batch(ds: OfflineDataset, B: int, theta: float, wbc_min: float,
                 rng: np.random.Generator) -> SampleBatch:
    """Transition-uniform mini-batch with preferences drawn around each
    trajectory's behavior preference and uniform bc weights."""
    if len(ds) == 0:
        raise InvalidArgumentError("cannot sample from an empty dataset")
    if B < 1:
        raise InvalidArgumentError("batch size must be >= 1")
    if not 0.0 < wbc_min <= 1.0:
        raise InvalidArgumentError("wbc_min must lie in (0, 1]")
    flat = ds.flat
    idx = rng.integers(0, flat["states"].shape[0], size=B)
    behavior = ds.approx_prefs[flat["traj_index"][idx]]
    prefs = sample_cap(behavior, theta, rng)
    wbc = rng.uniform(wbc_min, 1.0, size=B)
    return SampleBatch(flat["states"][idx], flat["actions"][idx], flat["rewards"][idx],
                       flat["next_states"][idx], flat["terminals"][idx], prefs, wbc,
                       behavior, wbc_min)


# ------------------------------------------------------------------ persistence

def save_dataset(ds: OfflineDataset, path):
    header = {"format_version": FORMAT_VERSION, "env": ds.env_name,
              "n_objectives": ds.n_objectives, "objective_shift": ds.objective_shift.tolist(),
              "n_trajectories": len(ds), "metadata": ds.metadata}
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for t, p in zip(ds.trajectories, ds.approx_prefs):
            steps = [{"s": t.states[k].tolist(), "a": t.actions[k].tolist(),
                      "r": t.rewards[k].tolist(), "s2": t.next_states[k].tolist(),
                      "done": bool(t.terminals[k])} for k in range(len(t))]
            fh.write(json.dumps({"transitions": steps, "episode_return": t.episode_return.tolist(),
                                 "approx_pref": p.tolist()}) + "\n")


def _parse_line(raw: str, lineno: int) -> dict:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON ({exc.msg})", lineno) from None
    if not isinstance(obj, dict):
        raise ParseError("expected a JSON object", lineno)
    return obj


def load_dataset(path) -> OfflineDataset:
    with open(path) as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", 1)
    header = _parse_line(lines[0], 1)
    try:
        if header["format_version"] != FORMAT_VERSION:
            raise ParseError(f"unsupported format_version {header['format_version']!r}", 1)
        env, n_obj = str(header["env"]), int(header["n_objectives"])
        shift = np.array(header["objective_shift"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad header ({exc})", 1) from None
    if shift.shape != (n_obj,):
        raise ParseError("objective_shift length does not match n_objectives", 1)
    trajs, prefs = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        obj = _parse_line(raw, lineno)
        try:
            steps = obj["transitions"]
            cols = {k: np.array([st[k] for st in steps], dtype=float) for k in ("s", "a", "r", "s2")}
            done = np.array([st["done"] for st in steps], dtype=bool)
            ret = np.array(obj["episode_return"], dtype=float)
            pref = np.array(obj["approx_pref"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad trajectory record ({exc})", lineno) from None
        if cols["r"].ndim != 2 or cols["r"].shape[1] != n_obj or pref.shape != (n_obj,):
            raise ParseError("reward or preference dimension does not match the header", lineno)
        try:
            traj = Trajectory(cols["s"], cols["a"], cols["r"], cols["s2"], done, ret)
        except InvalidArgumentError as exc:
            raise IntegrityError(f"line {lineno}: {exc}") from None
        try:
            expected = approx_behavior_pref(traj, shift).weights
        except DegenerateReturnError as exc:
            raise IntegrityError(f"line {lineno}: {exc}") from None
        if np.max(np.abs(expected - pref)) > 1e-9:
            raise IntegrityError(f"line {lineno}: approx_pref is inconsistent with episode_return")
        trajs.append(traj)
        prefs.append(pref)
    expected_n = header.get("n_trajectories")
    if expected_n is not None and len(trajs) != int(expected_n):
        raise ParseError(f"file truncated: expected {expected_n} trajectories, found {len(trajs)}",
                         len(lines) + 1)
    return OfflineDataset(tuple(trajs), np.array(prefs).reshape(len(trajs), n_obj), env, shift,
                          dict(header.get("metadata") or {}))
