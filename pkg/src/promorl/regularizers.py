"""Behavior-cloning policy families: deterministic MSE, CVAE and diffusion.

Every actor reads the row ``[state | task_part | bc_weight]`` and exposes
three entry points: ``act`` (taped, differentiable action sample),
``bc_loss_per_sample`` (taped, shape ``(B,)``) and ``sample`` (numpy only).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidArgumentError, InvalidConfigurationError, NumericalError
from .nn import Mlp, MlpConfig

FAMILIES = ("mse", "cvae", "diffusion")
LOGVAR_BOUNDS = (-10.0, 10.0)


def actor_input(states, task_parts, bc_weights) -> np.ndarray:
    """Fixed concatenation order ``[state | task_part | bc_weight]``."""
    states = np.atleast_2d(states)
    task_parts = np.atleast_2d(task_parts)
    bc = np.asarray(bc_weights, dtype=float).reshape(-1, 1)
    return np.concatenate([states, task_parts, bc], axis=1)


# ------------------------------------------------------------------ schedules

@dataclass(frozen=True, eq=False)
class DiffusionSchedule:
    betas: np.ndarray

    def __post_init__(self):
        b = np.array(self.betas, dtype=float)
        if b.ndim != 1 or b.size < 1:
            raise InvalidArgumentError("a schedule needs at least one step")
        if np.any(b <= 0) or np.any(b >= 1) or not np.all(np.isfinite(b)):
            raise InvalidArgumentError("betas must lie strictly inside (0, 1)")
        b.setflags(write=False)
        object.__setattr__(self, "betas", b)

    @classmethod
    def linear(cls, n_steps: int = 5, beta_start: float = 1e-4, beta_end: float = 0.1):
        return cls(np.linspace(beta_start, beta_end, n_steps))

    @classmethod
    def variance_preserving(cls, n_steps: int = 5, b_min: float = 0.1, b_max: float = 10.0):
        t = np.arange(1, n_steps + 1)
        alpha = np.exp(-b_min / n_steps - 0.5 * (b_max - b_min) * (2 * t - 1) / n_steps ** 2)
        return cls(1.0 - alpha)

    @classmethod
    def from_alpha_bars(cls, alpha_bars):
        ab = np.asarray(alpha_bars, dtype=float)
        if ab.ndim != 1 or ab.size < 1 or np.any(ab <= 0) or ab[0] >= 1:
            raise InvalidArgumentError("alpha-bars must be positive and start below 1")
        if np.any(np.diff(ab) >= 0):
            raise InvalidArgumentError("alpha-bars must be strictly decreasing")
        prev = np.concatenate([[1.0], ab[:-1]])
        return cls(1.0 - ab / prev)

    @property
    def n_steps(self) -> int:
        return self.betas.size

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)


SCHEDULES = {"linear": DiffusionSchedule.linear, "vp": DiffusionSchedule.variance_preserving}


# --------------------------------------------------------------------- actors

class _Actor:
    family = ""

    def __init__(self, state_dim, n_objectives, action_dim, action_low=-1.0, action_high=1.0):
        self.state_dim = state_dim
        self.n_objectives = n_objectives
        self.action_dim = action_dim
        self.in_dim = state_dim + n_objectives + 1
        self.low = np.broadcast_to(np.asarray(action_low, float), (action_dim,)).copy()
        self.high = np.broadcast_to(np.asarray(action_high, float), (action_dim,)).copy()
        self.nets: dict[str, Mlp] = {}

    @property
    def params(self) -> list[Tensor]:
        return [p for net in self.nets.values() for p in net.params]

    def named_params(self) -> list[tuple[str, np.ndarray]]:
        return [(p.name, p.data) for p in self.params]

    def _squash(self, t: Tensor) -> Tensor:
        # nets end in tanh; rescale from [-1, 1] to the action box
        if np.all(self.low == -1.0) and np.all(self.high == 1.0):
            return t
        return ad.add(ad.mul(t, 0.5 * (self.high - self.low)), 0.5 * (self.high + self.low))

    def _squash_np(self, a: np.ndarray) -> np.ndarray:
        return 0.5 * (self.high - self.low) * a + 0.5 * (self.high + self.low)

    def _check(self, x):
        if np.shape(x)[-1] != self.in_dim:
            raise InvalidArgumentError(f"actor input must have width {self.in_dim}")

    def bc_loss(self, x, actions, rng=None) -> Tensor:
        return ad.tmean(self.bc_loss_per_sample(x, actions, rng))


class MseActor(_Actor):
    family = "mse"

    def __init__(self, state_dim, n_objectives, action_dim, hidden=(64, 64), rng=None,
                 activation="relu", action_low=-1.0, action_high=1.0):
        super().__init__(state_dim, n_objectives, action_dim, action_low, action_high)
        rng = rng if rng is not None else np.random.default_rng(0)
        cfg = MlpConfig((self.in_dim, *hidden, action_dim), activation, "tanh")
        self.nets["policy"] = Mlp(cfg, rng, "actor.policy")

    def act(self, x, rng=None, track_params=True) -> Tensor:
        self._check(x)
        return self._squash(self.nets["policy"].forward(x, track_params))

    def sample(self, x, rng=None) -> np.ndarray:
        self._check(x)
        return self._squash_np(self.nets["policy"].predict(x))

    def bc_loss_per_sample(self, x, actions, rng=None) -> Tensor:
        diff = ad.sub(self.act(x), np.atleast_2d(actions))
        return ad.tmean(ad.square(diff), axis=1)


class CvaeActor(_Actor):
    family = "cvae"

    def __init__(self, state_dim, n_objectives, action_dim, hidden=(64, 64), rng=None,
                 activation="relu", latent_dim=None, action_low=-1.0, action_high=1.0):
        super().__init__(state_dim, n_objectives, action_dim, action_low, action_high)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.latent_dim = int(latent_dim or 2 * action_dim)
        if self.latent_dim < 1:
            raise InvalidArgumentError("latent_dim must be >= 1")
        enc = MlpConfig((self.in_dim + action_dim, *hidden, 2 * self.latent_dim), activation)
        dec = MlpConfig((self.in_dim + self.latent_dim, *hidden, action_dim), activation, "tanh")
        self.nets["encoder"] = Mlp(enc, rng, "actor.encoder")
        self.nets["decoder"] = Mlp(dec, rng, "actor.decoder")

    def encode(self, x, actions):
        h = self.nets["encoder"].forward(np.concatenate([x, np.atleast_2d(actions)], axis=1))
        L = self.latent_dim
        mean = ad.getitem(h, (slice(None), slice(0, L)))
        logvar = ad.getitem(h, (slice(None), slice(L, 2 * L)))
        if not np.all(np.isfinite(logvar.data)):
            raise NumericalError("encoder produced a non-finite log-variance")
        return mean, ad.clip(logvar, *LOGVAR_BOUNDS)

    def decode(self, x, z, track_params=True) -> Tensor:
        return self._squash(self.nets["decoder"].forward(ad.concat([ad.tensor(x), ad.tensor(z)], 1),
                                                         track_params))

    def act(self, x, rng, track_params=True) -> Tensor:
        self._check(x)
        z = rng.standard_normal((np.shape(x)[0], self.latent_dim))
        return self.decode(x, z, track_params)

    def sample(self, x, rng) -> np.ndarray:
        self._check(x)
        z = rng.standard_normal((np.shape(x)[0], self.latent_dim))
        return self._squash_np(self.nets["decoder"].predict(np.concatenate([x, z], axis=1)))

    @staticmethod
    def kl_per_sample(mean: Tensor, logvar: Tensor) -> Tensor:
        """Closed-form KL(N(mean, exp(logvar)) || N(0, I)) summed over latents."""
        inner = ad.sub(ad.add(ad.square(mean), ad.exp(logvar)), ad.add(logvar, 1.0))
        return ad.mul(ad.tsum(inner, axis=1), 0.5)

    def bc_loss_per_sample(self, x, actions, rng) -> Tensor:
        self._check(x)
        mean, logvar = self.encode(x, actions)
        eps = rng.standard_normal(mean.shape)
        z = ad.add(mean, ad.mul(ad.exp(ad.mul(logvar, 0.5)), eps))
        recon = ad.tmean(ad.square(ad.sub(self.decode(x, z), np.atleast_2d(actions))), axis=1)
        return ad.add(recon, self.kl_per_sample(mean, logvar))


class DiffusionActor(_Actor):
    family = "diffusion"

    def __init__(self, state_dim, n_objectives, action_dim, hidden=(64, 64), rng=None,
                 activation="relu", schedule: DiffusionSchedule | None = None,
                 reverse_variance="posterior", action_low=-1.0, action_high=1.0):
        super().__init__(state_dim, n_objectives, action_dim, action_low, action_high)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.schedule = schedule or DiffusionSchedule.linear()
        self.reverse_variance = reverse_variance
        cfg = MlpConfig((self.in_dim + action_dim + 1, *hidden, action_dim), activation)
        self.nets["eps"] = Mlp(cfg, rng, "actor.eps")

    def _eps_input(self, noisy, x, step_frac):
        frac = np.broadcast_to(np.asarray(step_frac, float).reshape(-1, 1), (np.shape(x)[0], 1))
        return ad.concat([ad.tensor(noisy), ad.tensor(x), ad.tensor(frac)], 1)

    def predict_eps(self, noisy, x, step_frac, track_params=True) -> Tensor:
        return self.nets["eps"].forward(self._eps_input(noisy, x, step_frac), track_params)

    def bc_loss_per_sample(self, x, actions, rng) -> Tensor:
        self._check(x)
        a = np.atleast_2d(actions)
        # train in the unit box so noise scales are comparable across envs
        a = (a - 0.5 * (self.high + self.low)) / (0.5 * (self.high - self.low))
        sch = self.schedule
        i = rng.integers(1, sch.n_steps + 1, size=a.shape[0])
        eps = rng.standard_normal(a.shape)
        ab = sch.alpha_bars[i - 1][:, None]
        noisy = np.sqrt(ab) * a + np.sqrt(1.0 - ab) * eps
        pred = self.predict_eps(noisy, x, i / sch.n_steps)
        return ad.tsum(ad.square(ad.sub(pred, eps)), axis=1)

    def _reverse_coeffs(self, i):
        sch = self.schedule
        beta, alpha, ab = sch.betas[i - 1], sch.alphas[i - 1], sch.alpha_bars[i - 1]
        if self.reverse_variance == "posterior" and i > 1:
            var = beta * (1.0 - sch.alpha_bars[i - 2]) / (1.0 - ab)
        else:
            var = beta
        return 1.0 / np.sqrt(alpha), beta / np.sqrt(1.0 - ab), np.sqrt(var)

    def act(self, x, rng, track_params=True) -> Tensor:
        """Reverse chain on the tape so gradients flow through every step."""
        self._check(x)
        n = np.shape(x)[0]
        cur = ad.tensor(rng.standard_normal((n, self.action_dim)))
        for i in range(self.schedule.n_steps, 0, -1):
            c_out, c_eps, sigma = self._reverse_coeffs(i)
            eps = self.predict_eps(cur, x, i / self.schedule.n_steps, track_params)
            cur = ad.mul(ad.sub(cur, ad.mul(eps, c_eps)), c_out)
            if i > 1:
                cur = ad.add(cur, sigma * rng.standard_normal((n, self.action_dim)))
        return self._squash(ad.clip(cur, -1.0, 1.0))

    def sample(self, x, rng) -> np.ndarray:
        self._check(x)
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        net = self.nets["eps"]
        cur = rng.standard_normal((n, self.action_dim))
        for i in range(self.schedule.n_steps, 0, -1):
            c_out, c_eps, sigma = self._reverse_coeffs(i)
            frac = np.full((n, 1), i / self.schedule.n_steps)
            eps = net.predict(np.concatenate([cur, x, frac], axis=1))
            cur = (cur - c_eps * eps) * c_out
            if i > 1:
                cur = cur + sigma * rng.standard_normal((n, self.action_dim))
        return self._squash_np(np.clip(cur, -1.0, 1.0))


_FAMILY_CLASSES = {"mse": MseActor, "cvae": CvaeActor, "diffusion": DiffusionActor}


def make_actor(family: str, state_dim: int, n_objectives: int, action_dim: int, **kwargs) -> _Actor:
    if family not in _FAMILY_CLASSES:
        raise InvalidConfigurationError(f"unknown regularizer family {family!r}")
    return _FAMILY_CLASSES[family](state_dim, n_objectives, action_dim, **kwargs)


def _require(actor, family):
    if getattr(actor, "family", None) != family:
        raise InvalidConfigurationError(
            f"expected a {family} actor, got {getattr(actor, 'family', type(actor).__name__)}")


def bc_loss_mse(actor, x, actions) -> Tensor:
    _require(actor, "mse")
    return actor.bc_loss(x, actions)


def bc_loss_cvae(actor, x, actions, rng) -> Tensor:
    _require(actor, "cvae")
    return actor.bc_loss(x, actions, rng)


def bc_loss_diffusion(actor, x, actions, rng) -> Tensor:
    _require(actor, "diffusion")
    return actor.bc_loss(x, actions, rng)


def sample_action(actor, x, rng=None) -> np.ndarray:
    return actor.sample(np.atleast_2d(x), rng)
