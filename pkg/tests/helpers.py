"""Small training routines shared by unit and acceptance tests."""
import numpy as np

from promorl import autodiff as ad
from promorl.nn import OptimizerState, adam_step, zero_grad
from promorl.regularizers import DiffusionActor, actor_input, make_actor


def clone_fixed_input(actor, actions_fn, steps, batch=128, lr=1e-3, seed=0):
    """Fit ``actor`` by its bc loss alone on one fixed conditioning input."""
    rng = np.random.default_rng(seed)
    opt = OptimizerState.for_params(actor.params, learning_rate=lr)
    x = actor_input(np.zeros((batch, actor.state_dim)),
                    np.full((batch, actor.n_objectives), 0.25), np.full(batch, 0.5))
    for _ in range(steps):
        zero_grad(actor.params)
        loss = actor.bc_loss(x, actions_fn(rng, batch), rng)
        ad.backward(loss)
        adam_step(opt, actor.params)
    return actor


def bimodal_check(steps=5000, n_samples=1000, seed=0):
    """Diffusion actor fit to actions drawn from {-0.8, +0.8}; returns
    (fraction within 0.2 of a mode, fraction at the positive mode)."""
    rng = np.random.default_rng(seed)
    actor = DiffusionActor(1, 2, 1, hidden=(64, 64), rng=rng)
    clone_fixed_input(actor, lambda r, b: r.choice([-0.8, 0.8], size=(b, 1)), steps, seed=seed)
    x = actor_input(np.zeros((n_samples, 1)), np.full((n_samples, 2), 0.25), np.full(n_samples, 0.5))
    s = actor.sample(x, np.random.default_rng(seed + 1))[:, 0]
    near = np.minimum(np.abs(s - 0.8), np.abs(s + 0.8)) < 0.2
    return float(near.mean()), float((s > 0).mean())


def single_action_fit(family, target, steps=5000, seed=0):
    rng = np.random.default_rng(seed)
    actor = make_actor(family, 1, 2, len(target), hidden=(32, 32), rng=rng)
    clone_fixed_input(actor, lambda r, b: np.tile(target, (b, 1)), steps, batch=32, seed=seed)
    x = actor_input(np.zeros((200, 1)), np.full((200, 2), 0.25), np.full(200, 0.5))
    return actor.sample(x, np.random.default_rng(seed + 1))
