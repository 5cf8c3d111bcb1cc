"""MLP building blocks, Adam, Polyak averaging, checkpoints, gradient checks."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (InvalidArgumentError, NonFiniteGradientError, ParseError)

ACTIVATIONS = ("relu", "tanh", "mish")
_NUMPY_ACT = {
    "relu": lambda x: np.maximum(x, 0.0),
    "tanh": np.tanh,
    "mish": lambda x: x * np.tanh(np.logaddexp(0.0, x)),
}
_TAPE_ACT = {"relu": ad.relu, "tanh": ad.tanh, "mish": ad.mish}


@dataclass(frozen=True)
class MlpConfig:
    layer_widths: tuple  # (input, hidden..., output)
    activation: str = "relu"
    output_activation: str = "none"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 3:
            raise InvalidArgumentError("an MLP needs at least one hidden layer")
        if min(widths) < 1:
            raise InvalidArgumentError("layer widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise InvalidArgumentError(f"unknown activation {self.activation!r}")
        if self.output_activation not in ("none", "tanh"):
            raise InvalidArgumentError(f"unknown output activation {self.output_activation!r}")


class Mlp:
    """Fully connected network with weights initialized in +-1/sqrt(fan_in)."""

    def __init__(self, config: MlpConfig, rng: np.random.Generator, name="mlp"):
        self.config = config
        self.name = name
        self.params: list[Tensor] = []
        widths = config.layer_widths
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=(fan_out,))
            self.params.append(ad.parameter(w, name=f"{name}.l{i}.weight"))
            self.params.append(ad.parameter(b, name=f"{name}.l{i}.bias"))

    @property
    def in_dim(self) -> int:
        return self.config.layer_widths[0]

    @property
    def out_dim(self) -> int:
        return self.config.layer_widths[-1]

    def _check(self, x_shape):
        if x_shape[-1] != self.in_dim:
            raise InvalidArgumentError(
                f"{self.name}: expected input width {self.in_dim}, got {x_shape[-1]}")

    def forward(self, x, track_params: bool = True) -> Tensor:
        """Taped forward pass; ``track_params=False`` treats weights as constants."""
        x = ad.tensor(x)
        self._check(x.shape)
        act = _TAPE_ACT[self.config.activation]
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            if not track_params:
                w, b = Tensor(w.data), Tensor(b.data)
            x = ad.linear(x, w, b)
            if i < n_layers - 1:
                x = act(x)
        if self.config.output_activation == "tanh":
            x = ad.tanh(x)
        return x

    __call__ = forward

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Tape-free forward pass on raw arrays."""
        x = np.asarray(x, dtype=np.float64)
        self._check(x.shape)
        act = _NUMPY_ACT[self.config.activation]
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            x = x @ self.params[2 * i].data + self.params[2 * i + 1].data
            if i < n_layers - 1:
                x = act(x)
        if self.config.output_activation == "tanh":
            x = np.tanh(x)
        return x

    def zero_last_layer(self):
        self.params[-2].data[...] = 0.0
        self.params[-1].data[...] = 0.0

    def copy(self, name=None) -> "Mlp":
        clone = Mlp.__new__(Mlp)
        clone.config = self.config
        clone.name = name or self.name
        clone.params = [ad.parameter(p.data.copy(), name=p.name) for p in self.params]
        return clone


def zero_grad(params):
    for p in params:
        p.grad = None


def flat_params(params) -> np.ndarray:
    return np.concatenate([p.data.ravel() for p in params]) if params else np.zeros(0)


@dataclass
class OptimizerState:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    kind: str = "adam"
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step_count: int = 0

    @classmethod
    def for_params(cls, params, **hyper) -> "OptimizerState":
        state = cls(**hyper)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def adam_step(state: OptimizerState, params, grads=None):
    """In-place Adam update with bias correction.

    ``grads`` defaults to each parameter's ``.grad``; a missing gradient is
    treated as zero.
    """
    if grads is None:
        grads = [p.grad for p in params]
    if len(grads) != len(params) or len(state.m) != len(params):
        raise InvalidArgumentError("optimizer state does not match parameter list")
    for p, g in zip(params, grads):
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(p.name)
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    lr = state.learning_rate
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = 0.0
        elif g.shape != p.data.shape:
            raise InvalidArgumentError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        p.data -= lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + state.eps)


def polyak_update(target_params, online_params, tau: float):
    if not (0.0 < tau <= 1.0):
        raise InvalidArgumentError(f"tau must lie in (0, 1], got {tau}")
    if len(target_params) != len(online_params):
        raise InvalidArgumentError("parameter lists differ in length")
    for t, o in zip(target_params, online_params):
        if t.data.shape != o.data.shape:
            raise InvalidArgumentError(f"shape mismatch {t.data.shape} vs {o.data.shape}")
        if tau == 1.0:
            t.data[...] = o.data
        else:
            t.data *= 1.0 - tau
            t.data += tau * o.data
    return target_params


def finite_diff_check(f, params, h: float = 1e-5, max_entries: int | None = None,
                      rng=None) -> float:
    """Worst relative discrepancy between ``backward`` and central differences.

    ``f`` maps the current parameter values to a scalar ``Tensor``; it must be
    deterministic (re-seed any noise inside). ``max_entries`` subsamples
    parameter coordinates for large networks. The relative error of a
    coordinate is ``|g_bp - g_fd| / max(|g_bp|, |g_fd|, 1e-6)``.
    """
    zero_grad(params)
    loss = f()
    ad.backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else np.array(p.grad) for p in params]
    coords = [(i, j) for i, p in enumerate(params) for j in range(p.data.size)]
    if max_entries is not None and len(coords) > max_entries:
        rng = rng or np.random.default_rng(0)
        pick = rng.choice(len(coords), size=max_entries, replace=False)
        coords = [coords[k] for k in sorted(pick)]
    worst = 0.0
    for i, j in coords:
        flat = params[i].data.reshape(-1)
        orig = flat[j]
        flat[j] = orig + h
        up = float(f().data)
        flat[j] = orig - h
        down = float(f().data)
        flat[j] = orig
        fd = (up - down) / (2.0 * h)
        bp = analytic[i].reshape(-1)[j]
        err = abs(bp - fd) / max(abs(bp), abs(fd), 1e-6)
        worst = max(worst, err)
    zero_grad(params)
    return worst


# ------------------------------------------------------------------ checkpoints

_MAGIC = b"PROMORL-CKPT\x01"


def save_checkpoint(path, header: dict, named_params: list[tuple[str, np.ndarray]]):
    """Write a JSON header followed by little-endian float64 parameter blocks."""
    header = dict(header)
    header["blocks"] = [{"name": n, "shape": list(a.shape)} for n, a in named_params]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in named_params:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(_MAGIC):
        raise ParseError(f"{path}: not a checkpoint file")
    off = len(_MAGIC)
    if len(raw) < off + 8:
        raise ParseError(f"{path}: truncated header")
    (n,) = struct.unpack("<Q", raw[off:off + 8])
    off += 8
    try:
        header = json.loads(raw[off:off + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: malformed header ({exc})") from None
    off += n
    out = []
    for block in header["blocks"]:
        shape = tuple(block["shape"])
        size = int(np.prod(shape)) * 8
        if off + size > len(raw):
            raise ParseError(f"{path}: truncated block {block['name']!r}")
        arr = np.frombuffer(raw[off:off + size], dtype="<f8").astype(np.float64).reshape(shape)
        out.append((block["name"], arr))
        off += size
    if off != len(raw):
        raise ParseError(f"{path}: {len(raw) - off} trailing bytes")
    return header, out
