"""Preference vectors, trajectories and the vector math used everywhere else.

Vector returns are plain 1-D ``numpy`` arrays. Preferences are validated,
immutable wrappers around a point of the probability simplex.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateReturnError, InvalidArgumentError

SIMPLEX_TOL = 1e-9
RETURN_TOL = 1e-6
WBC_MIN_DEFAULT = 0.2

VectorReturn = np.ndarray


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def as_vector(v) -> np.ndarray:
    """Return the raw weight/return array for a Preference or array-like."""
    if isinstance(v, Preference):
        return v.weights
    return np.asarray(v, dtype=float)


@dataclass(frozen=True, eq=False)
class Preference:
    """Linear preference over ``n >= 2`` objectives (a point of the simplex)."""

    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim != 1 or w.size < 2:
            raise InvalidArgumentError(f"preference needs n >= 2 components, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise InvalidArgumentError(f"preference components must be finite and >= 0: {w}")
        if abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise InvalidArgumentError(f"preference must sum to 1, sums to {w.sum()!r}")
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.size

    def __len__(self):
        return self.weights.size

    def __iter__(self):
        return iter(self.weights.tolist())

    def __array__(self, dtype=None, copy=None):
        return self.weights if dtype is None else self.weights.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, Preference):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(tuple(self.weights.tolist()))

    def __repr__(self):
        return f"Preference({self.weights.tolist()})"


@dataclass(frozen=True, eq=False)
class AugmentedPreference:
    """Task preference rescaled by ``1 - bc_weight`` and extended by ``bc_weight``."""

    task_part: np.ndarray
    bc_weight: float
    wbc_min: float = WBC_MIN_DEFAULT

    def __post_init__(self):
        t = _frozen(self.task_part)
        object.__setattr__(self, "task_part", t)
        if not (0.0 < self.wbc_min <= self.bc_weight <= 1.0):
            raise InvalidArgumentError(
                f"bc_weight {self.bc_weight!r} outside [{self.wbc_min}, 1]")
        if np.any(t < -SIMPLEX_TOL) or abs(t.sum() + self.bc_weight - 1.0) > SIMPLEX_TOL:
            raise InvalidArgumentError("augmented preference does not lie on the simplex")

    @property
    def full(self) -> np.ndarray:
        """The (n+1)-vector ``[task_part..., bc_weight]``."""
        return np.append(self.task_part, self.bc_weight)

    @property
    def preference(self) -> Preference:
        """Recover the original task preference (requires ``bc_weight < 1``)."""
        if self.bc_weight >= 1.0:
            raise InvalidArgumentError("task preference is not recoverable at bc_weight == 1")
        w = self.task_part / (1.0 - self.bc_weight)
        return Preference(w / w.sum())

    def __eq__(self, other):
        if not isinstance(other, AugmentedPreference):
            return NotImplemented
        return (np.array_equal(self.task_part, other.task_part)
                and self.bc_weight == other.bc_weight)

    def __hash__(self):
        return hash((tuple(self.task_part.tolist()), self.bc_weight))


@dataclass(frozen=True, eq=False)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    terminal: bool


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One episode stored column-wise; ``transitions`` gives the row view."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    episode_return: np.ndarray = field(default=None)

    def __post_init__(self):
        rewards = _frozen(np.atleast_2d(self.rewards))
        object.__setattr__(self, "rewards", rewards)
        for name in ("states", "actions", "next_states"):
            object.__setattr__(self, name, _frozen(np.atleast_2d(getattr(self, name))))
        object.__setattr__(self, "terminals", _frozen(self.terminals, dtype=bool))
        T = rewards.shape[0]
        if T < 1:
            raise InvalidArgumentError("trajectory must contain at least one transition")
        for name in ("states", "actions", "next_states", "terminals"):
            if getattr(self, name).shape[0] != T:
                raise InvalidArgumentError(f"{name} length does not match rewards length {T}")
        if np.any(self.terminals[:-1]):
            raise InvalidArgumentError("only the final transition may be terminal")
        total = rewards.sum(axis=0)
        if self.episode_return is None:
            object.__setattr__(self, "episode_return", _frozen(total))
        else:
            ret = _frozen(self.episode_return)
            if ret.shape != total.shape or np.max(np.abs(ret - total)) > RETURN_TOL:
                raise InvalidArgumentError("episode_return does not equal the summed rewards")
            object.__setattr__(self, "episode_return", ret)

    def __len__(self):
        return self.rewards.shape[0]

    @property
    def n_objectives(self) -> int:
        return self.rewards.shape[1]

    @property
    def transitions(self) -> list[Transition]:
        return [Transition(self.states[t], self.actions[t], self.rewards[t],
                           self.next_states[t], bool(self.terminals[t]))
                for t in range(len(self))]

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k))
                   for k in ("states", "actions", "rewards", "next_states",
                             "terminals", "episode_return"))

    __hash__ = None


def _check_same_dim(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidArgumentError(f"dimension mismatch: {a.shape} vs {b.shape}")


def scalarize(pref, v) -> float:
    """Linear utility ``pref . v``."""
    w, x = as_vector(pref), as_vector(v)
    _check_same_dim(w, x)
    return float(w @ x)


def cosine_distance(a, b) -> float:
    """``1 - cos(a, b)``; lies in [0, 1] for simplex vectors."""
    x, y = as_vector(a), as_vector(b)
    _check_same_dim(x, y)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        raise InvalidArgumentError("cosine distance is undefined for zero vectors")
    return float(1.0 - (x @ y) / (nx * ny))


def cosine_distances(targets: np.ndarray, prefs: np.ndarray) -> np.ndarray:
    """Row-wise cosine distance between two (m, n) arrays (or broadcastable)."""
    targets, prefs = np.asarray(targets, float), np.asarray(prefs, float)
    num = np.sum(targets * prefs, axis=-1)
    den = np.linalg.norm(targets, axis=-1) * np.linalg.norm(prefs, axis=-1)
    return 1.0 - num / den


def l1_normalize(v) -> Preference:
    x = as_vector(v)
    if x.ndim != 1 or np.any(x < 0) or not np.any(x > 0):
        raise DegenerateReturnError(f"cannot L1-normalize return {x.tolist()}")
    w = x / x.sum()
    # renormalize once more so the simplex tolerance holds for extreme ratios
    return Preference(w / w.sum())


def augment(pref, w_bc: float, wbc_min: float = WBC_MIN_DEFAULT) -> AugmentedPreference:
    w = as_vector(pref)
    if not (wbc_min <= w_bc <= 1.0):
        raise InvalidArgumentError(f"w_bc={w_bc!r} outside [{wbc_min}, 1]")
    return AugmentedPreference((1.0 - w_bc) * w, float(w_bc), wbc_min)


def dominates(a, b) -> bool:
    """Pareto dominance for maximization."""
    x, y = as_vector(a), as_vector(b)
    _check_same_dim(x, y)
    return bool(np.all(x >= y) and np.any(x > y))


def preference_grid(n_objectives: int, n_prefs: int) -> list[Preference]:
    """Equidistant evaluation preferences.

    For two objectives this is ``[k/(n_prefs-1), 1-k/(n_prefs-1)]``,
    k = 0..n_prefs-1. For more objectives the simplex lattice with
    ``n_prefs - 1`` divisions per edge is returned.
    """
    if n_prefs < 2:
        raise InvalidArgumentError("n_prefs must be >= 2")
    m = n_prefs - 1
    if n_objectives == 2:
        return [Preference([k / m, 1.0 - k / m]) for k in range(n_prefs)]
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + [remaining])
            return
        for k in range(remaining, -1, -1):
            rec(prefix + [k], remaining - k, slots - 1)

    rec([], m, n_objectives)
    return [Preference(np.array(c, float) / m) for c in out]
