"""Deployment-time search for the behavior-cloning weight of a target preference.

The weight is drawn from a truncated Gaussian whose (mu, log sigma) follow a
score-function gradient of the mean scalarized return. Only those two scalars
change; the policy networks are never touched.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .core import Preference, WBC_MIN_DEFAULT, as_vector
from .errors import InvalidArgumentError, PromorlError

REJECTION_CAP = 1000
SIGMA_FLOOR = 0.01
_SQRT_2PI = np.sqrt(2.0 * np.pi)


def _pdf(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


def _mass(a, b) -> float:
    # Phi(b) - Phi(a), taken from the upper tail when both bounds sit above 0
    z = ndtr(-a) - ndtr(-b) if a > 0 else ndtr(b) - ndtr(a)
    return max(float(z), 1e-300)


@dataclass(frozen=True)
class TruncatedGaussian:
    mu: float
    sigma: float
    lower: float = WBC_MIN_DEFAULT
    upper: float = 1.0

    def __post_init__(self):
        if not self.lower < self.upper:
            raise InvalidArgumentError("lower bound must be below upper bound")
        if not (self.sigma > 0 and np.isfinite(self.sigma) and np.isfinite(self.mu)):
            raise InvalidArgumentError("sigma must be positive and parameters finite")

    def _ab(self):
        return (self.lower - self.mu) / self.sigma, (self.upper - self.mu) / self.sigma

    def mean(self) -> float:
        """Closed-form mean of the truncated distribution."""
        a, b = self._ab()
        z = _mass(a, b)
        return float(np.clip(self.mu + self.sigma * (_pdf(a) - _pdf(b)) / z, self.lower, self.upper))

    def score(self, x):
        """Gradient of log-density w.r.t. (mu, log sigma), truncation terms included."""
        x = np.asarray(x, dtype=float)
        a, b = self._ab()
        z_norm = _mass(a, b)
        z = (x - self.mu) / self.sigma
        d_mu = z / self.sigma - (_pdf(a) - _pdf(b)) / (self.sigma * z_norm)
        d_logsig = z * z - 1.0 - (a * _pdf(a) - b * _pdf(b)) / z_norm
        return d_mu, d_logsig


def sample_truncated(g: TruncatedGaussian, rng: np.random.Generator, size=None):
    """Rejection sampling from the parent Gaussian; after 1000 misses a parent
    draw is clamped to the bounds."""
    n = 1 if size is None else int(np.prod(size))
    out = np.empty(n)
    for i in range(n):
        for _ in range(REJECTION_CAP):
            x = g.mu + g.sigma * rng.standard_normal()
            if g.lower <= x <= g.upper:
                break
        else:
            x = min(max(g.mu + g.sigma * rng.standard_normal(), g.lower), g.upper)
        out[i] = x
    return float(out[0]) if size is None else out.reshape(size)


@dataclass
class AdaptationReport:
    target_pref: Preference
    iterations: list = field(default_factory=list)
    final_wbc: float = 0.0
    final_sigma: float = 0.0

    def to_dict(self) -> dict:
        return {"target_pref": as_vector(self.target_pref).tolist(), "final_wbc": self.final_wbc,
                "final_sigma": self.final_sigma, "iterations": self.iterations}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @property
    def n_trajectories(self) -> int:
        return sum(len(it["returns"]) for it in self.iterations)


@dataclass(frozen=True)
class AdaptConfig:
    iterations: int = 3
    trajectories: int = 10
    learning_rate: float = 0.1
    lower: float = WBC_MIN_DEFAULT
    upper: float = 1.0
    mu0: float | None = None
    sigma0: float | None = None
    sigma_floor: float = SIGMA_FLOOR

    def __post_init__(self):
        if self.iterations < 1 or self.trajectories < 1:
            raise InvalidArgumentError("N and K must be >= 1")
        if not 0 < self.lower < self.upper <= 1.0:
            raise InvalidArgumentError("bounds must satisfy 0 < lower < upper <= 1")

    @property
    def initial(self):
        mu = 0.5 * (self.lower + self.upper) if self.mu0 is None else self.mu0
        sigma = 0.25 * (self.upper - self.lower) if self.sigma0 is None else self.sigma0
        return float(mu), float(sigma)


def policy_utility_fn(bundle):
    """Utilities of one episode per (target, w_bc) row under a trained bundle."""
    from .trainer import rollout_returns

    def fn(targets: np.ndarray, wbcs: np.ndarray, rng) -> np.ndarray:
        rets = rollout_returns(bundle, targets, wbcs, rng)
        return np.sum(rets * targets, axis=1), rets

    return fn


def _call(fn, targets, wbcs, rng):
    out = fn(targets, wbcs, rng)
    if isinstance(out, tuple):
        return np.asarray(out[0], dtype=float), np.asarray(out[1], dtype=float)
    u = np.asarray(out, dtype=float)
    return u, u[:, None]


def _gradient(g: TruncatedGaussian, x: np.ndarray, u: np.ndarray):
    std = u.std()
    if std < 1e-12:
        return 0.0, 0.0
    adv = (u - u.mean()) / std
    d_mu, d_ls = g.score(x)
    return float(np.mean(adv * d_mu)), float(np.mean(adv * d_ls))


def adapt_many(bundle, targets, config: AdaptConfig = AdaptConfig(), seed: int = 0,
               utility_fn=None) -> list[AdaptationReport]:
    """Adapt the bc weight independently for each target preference.

    Each iteration draws K weights per target (one trajectory each), runs all
    episodes in one lockstep batch and takes a gradient step on (mu, log sigma).
    """
    targets = [t if isinstance(t, Preference) else Preference(t) for t in targets]
    w = np.array([t.weights for t in targets])
    K = config.trajectories
    fn = utility_fn or policy_utility_fn(bundle)
    rngs = [np.random.default_rng([seed, 3, i]) for i in range(len(targets))]
    rollout_rng = np.random.default_rng([seed, 4])
    mu0, sigma0 = config.initial
    state = [(mu0, sigma0) for _ in targets]
    reports = [AdaptationReport(t) for t in targets]
    for it in range(config.iterations):
        dists = [TruncatedGaussian(mu, max(sig, config.sigma_floor), config.lower, config.upper)
                 for mu, sig in state]
        draws = np.stack([sample_truncated(d, r, size=K) for d, r in zip(dists, rngs)])
        try:
            utils, rets = _call(fn, np.repeat(w, K, axis=0), draws.reshape(-1), rollout_rng)
        except PromorlError as exc:
            raise type(exc)(f"adaptation iteration {it}: {exc}") from exc
        utils = np.asarray(utils, dtype=float).reshape(len(targets), K)
        rets = np.asarray(rets, dtype=float).reshape(len(targets), K, -1)
        for i, d in enumerate(dists):
            reports[i].iterations.append({
                "iteration": it, "mu": d.mu, "sigma": d.sigma,
                "mean_utility": float(utils[i].mean()), "wbc_samples": draws[i].tolist(),
                "returns": rets[i].tolist()})
            g_mu, g_ls = _gradient(d, draws[i], utils[i])
            mu = float(np.clip(d.mu + config.learning_rate * g_mu, config.lower, config.upper))
            sigma = max(float(np.exp(np.log(d.sigma) + config.learning_rate * g_ls)),
                        config.sigma_floor)
            state[i] = (mu, sigma)
    for rep, (mu, sig) in zip(reports, state):
        rep.final_wbc = float(np.clip(mu, config.lower, config.upper))
        rep.final_sigma = float(sig)
    return reports


def adapt(bundle, target, N: int = 3, K: int = 10, seed: int = 0, utility_fn=None,
          **overrides) -> AdaptationReport:
    cfg = AdaptConfig(iterations=N, trajectories=K, **overrides)
    return adapt_many(bundle, [target], cfg, seed, utility_fn)[0]


def oracle_wbc_many(bundle, targets, grid_points: int = 20, episodes: int = 5, seed: int = 0,
                    lower: float = WBC_MIN_DEFAULT, upper: float = 1.0, utility_fn=None):
    """Best grid weight per target; ties go to the larger (more conservative) weight."""
    if grid_points < 2:
        raise InvalidArgumentError("grid_points must be >= 2")
    targets = [t if isinstance(t, Preference) else Preference(t) for t in targets]
    grid = np.linspace(lower, upper, grid_points)
    w = np.array([t.weights for t in targets])
    rows = np.repeat(w, grid_points * episodes, axis=0)
    wbcs = np.tile(np.repeat(grid, episodes), len(targets))
    fn = utility_fn or policy_utility_fn(bundle)
    utils, _ = _call(fn, rows, wbcs, np.random.default_rng([seed, 5]))
    mean_u = np.asarray(utils, dtype=float).reshape(len(targets), grid_points, episodes).mean(axis=2)
    best = []
    for row in mean_u:
        top = np.flatnonzero(row >= row.max() - 1e-12)
        best.append(float(grid[top[-1]]))
    return best, mean_u


def oracle_wbc(bundle, target, grid_points: int = 20, episodes: int = 5, seed: int = 0,
               utility_fn=None, **bounds) -> float:
    best, _ = oracle_wbc_many(bundle, [target], grid_points, episodes, seed,
                              utility_fn=utility_fn, **bounds)
    return best[0]
