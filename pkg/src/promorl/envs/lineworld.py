"""Continuous point mass on [0, 1] trading forward progress against energy use."""
from __future__ import annotations

import numpy as np

HORIZON = 32
SPEED = 1.0 / HORIZON
FRONT_POINTS = 101


def initial_internal(n: int) -> np.ndarray:
    return np.zeros(n)


def observe(pos: np.ndarray, t: np.ndarray) -> np.ndarray:
    return np.stack([pos, (HORIZON - t) / HORIZON], axis=-1)


def dynamics(pos: np.ndarray, t: np.ndarray, actions: np.ndarray):
    """Vectorized transition for a batch of (position, step) pairs."""
    a = np.clip(actions[:, 0], -1.0, 1.0)
    new_pos = np.clip(pos + a * SPEED, 0.0, 1.0)
    progress = np.maximum(0.0, (new_pos - pos) * HORIZON)
    # position differences are multiples of 1/32 up to rounding; keep bounds exact
    progress = np.minimum(progress, 1.0)
    rewards = np.stack([progress, 1.0 - np.abs(a)], axis=-1)
    terminal = t + 1 >= HORIZON
    return new_pos, rewards, terminal


def oracle_front() -> np.ndarray:
    c = np.linspace(0.0, 1.0, FRONT_POINTS)
    return np.stack([HORIZON * c, HORIZON * (1.0 - c)], axis=-1)


def expert_actions(weights: np.ndarray, pos: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Constant throttle equal to the weight on progress."""
    return np.broadcast_to(np.atleast_2d(weights)[:, :1], (pos.shape[0], 1)).copy()
