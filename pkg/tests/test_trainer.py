import numpy as np
import pytest

from promorl.dataset import SampleBatch, generate_dataset
from promorl.errors import InvalidConfigurationError, TrainingDivergedError
from promorl.nn import finite_diff_check
from promorl.trainer import (PolicyBundle, TrainConfig, actor_loss, actor_loss_terms,
                             critic_loss, critic_targets, evaluate_policy, load_bundle,
                             save_bundle, train)

SMALL = dict(hidden=(16, 16), batch_size=16, log_every=10)


@pytest.fixture(scope="module")
def expert_ds():
    return generate_dataset("mo-lineworld", 40, quality_mix=1.0, noise_scale=0.0,
                            pref_sampler="uniform", seed=0)


def make_batch(rng, B=8, wbc=None, terminals=None):
    prefs = rng.dirichlet([1, 1], size=B)
    return SampleBatch(states=rng.uniform(0, 1, (B, 2)), actions=rng.uniform(-1, 1, (B, 1)),
                       rewards=rng.uniform(0, 1, (B, 2)), next_states=rng.uniform(0, 1, (B, 2)),
                       terminals=np.zeros(B, bool) if terminals is None else terminals,
                       prefs=prefs,
                       bc_weights=rng.uniform(0.2, 1, B) if wbc is None else np.full(B, wbc),
                       behavior_prefs=prefs)


@pytest.mark.parametrize("bad", [dict(theta=1.5), dict(theta=-0.1), dict(wbc_min=0.0),
                                 dict(gamma=1.2), dict(eta=-1.0), dict(n_critics=0),
                                 dict(regularizer_family="gan"), dict(polyak_tau=0.0)])
def test_config_validation(bad):
    with pytest.raises(InvalidConfigurationError):
        TrainConfig("mo-lineworld", **bad)


def test_config_round_trip():
    cfg = TrainConfig("mo-lineworld", "cvae", theta=0.3, **SMALL)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(InvalidConfigurationError):
        TrainConfig.from_dict({**cfg.to_dict(), "bogus": 1})


def test_full_bc_weight_leaves_only_cloning(rng):
    b = PolicyBundle(TrainConfig("mo-lineworld", eta=3.0, **SMALL))
    batch = make_batch(rng, wbc=1.0)
    q, bc = actor_loss_terms(b, batch, rng)
    np.testing.assert_array_equal(q.data, 0.0)
    loss = actor_loss(b, batch, rng).data
    from promorl.regularizers import actor_input
    x = actor_input(batch.states, batch.task_parts, batch.bc_weights)
    assert loss == pytest.approx(3.0 * b.actor.bc_loss(x, batch.actions, rng).data)


def test_zero_critic_gives_weighted_bc(rng):
    b = PolicyBundle(TrainConfig("mo-lineworld", eta=2.0, **SMALL))
    for c in b.critics:
        c.zero_last_layer()
    batch = make_batch(rng)
    from promorl.regularizers import actor_input
    x = actor_input(batch.states, batch.task_parts, batch.bc_weights)
    per = b.actor.bc_loss_per_sample(x, batch.actions, rng).data
    assert actor_loss(b, batch, rng).data == pytest.approx(np.mean(2.0 * batch.bc_weights * per))


def test_gamma_zero_and_terminal_targets(rng):
    b = PolicyBundle(TrainConfig("mo-lineworld", gamma=0.0, **SMALL))
    batch = make_batch(rng)
    np.testing.assert_array_equal(critic_targets(b, batch, rng), batch.rewards)
    b = PolicyBundle(TrainConfig("mo-lineworld", gamma=0.99, **SMALL))
    term = np.array([True, False] * 4)
    batch = make_batch(rng, terminals=term)
    y = critic_targets(b, batch, rng)
    np.testing.assert_array_equal(y[term], batch.rewards[term])
    assert np.all(y[~term] != batch.rewards[~term])


@pytest.mark.parametrize("family", ["mse", "cvae", "diffusion"])
def test_loss_gradients_match_finite_differences(family):
    rng = np.random.default_rng(3)
    b = PolicyBundle(TrainConfig("mo-lineworld", family, n_critics=2, activation="tanh",
                                 hidden=(6,), batch_size=4))
    batch = make_batch(rng, B=4)
    y = critic_targets(b, batch, np.random.default_rng(0))
    assert finite_diff_check(lambda: actor_loss(b, batch, np.random.default_rng(1)),
                             b.actor.params) < 1e-4
    assert finite_diff_check(lambda: critic_loss(b, batch, None, targets=y), b.critic_params) < 1e-4


def test_zero_iterations_is_a_no_op(expert_ds):
    cfg = TrainConfig("mo-lineworld", total_iterations=0, **SMALL)
    before = PolicyBundle(cfg).param_fingerprint()
    res = train(cfg, expert_ds)
    assert res.log == [] and res.bundle.param_fingerprint() == before


def test_training_is_deterministic(expert_ds, tmp_path):
    cfg = TrainConfig("mo-lineworld", "diffusion", total_iterations=30, seed=7, **SMALL)
    r1, r2 = train(cfg, expert_ds), train(cfg, expert_ds)
    save_bundle(r1.bundle, tmp_path / "a.ckpt")
    save_bundle(r2.bundle, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert load_bundle(tmp_path / "a.ckpt").param_fingerprint() == r1.bundle.param_fingerprint()
    assert [r["critic_loss"] for r in r1.log] == [r["critic_loss"] for r in r2.log]
    other = train(cfg.replace(seed=8), expert_ds)
    assert other.bundle.param_fingerprint() != r1.bundle.param_fingerprint()


def test_divergence_aborts_with_snapshot(expert_ds):
    cfg = TrainConfig("mo-lineworld", total_iterations=20, **SMALL)
    from promorl.trainer import train_step

    def poisoned(bundle, batch, rng):
        a, c = train_step(bundle, batch, rng)
        return (a, np.nan) if bundle.iteration == 12 else (a, c)

    with pytest.raises(TrainingDivergedError) as info:
        train(cfg, expert_ds, step_fn=poisoned)
    assert info.value.snapshot["iteration"] == 12
    assert len(info.value.snapshot["log_tail"]) == 1


def test_env_mismatch_rejected(expert_ds):
    with pytest.raises(InvalidConfigurationError):
        train(TrainConfig("mo-treasure", total_iterations=1), expert_ds)


def test_log_columns(expert_ds, tmp_path):
    cfg = TrainConfig("mo-lineworld", total_iterations=25, **SMALL)
    res = train(cfg, expert_ds, log_path=tmp_path / "m.csv")
    assert [r["iteration"] for r in res.log] == [10, 20, 25]
    head = (tmp_path / "m.csv").read_text().splitlines()[0]
    assert head == "iteration,critic_loss,actor_loss,mean_wbc,wall_ms"


def test_evaluate_zero_initialized_mse():
    b = PolicyBundle(TrainConfig("mo-lineworld", **SMALL))
    b.actor.nets["policy"].zero_last_layer()
    rows = evaluate_policy(b, 101, 2)
    assert len(rows) == 101
    for _, r in rows:
        np.testing.assert_allclose(r, [0.0, 32.0])


def test_evaluate_wbc_forms_agree():
    b = PolicyBundle(TrainConfig("mo-lineworld", "cvae", **SMALL))
    const = evaluate_policy(b, 5, 2, adapted_wbc=0.7)
    arr = evaluate_policy(b, 5, 2, adapted_wbc=np.full(5, 0.7))
    fn = evaluate_policy(b, 5, 2, adapted_wbc=lambda p: 0.7)
    dct = evaluate_policy(b, 5, 2, adapted_wbc={p: 0.7 for p, _ in const})
    for rows in (arr, fn, dct):
        np.testing.assert_array_equal([r for _, r in rows], [r for _, r in const])
    with pytest.raises(InvalidConfigurationError):
        evaluate_policy(b, 5, 2, adapted_wbc=np.ones(3))


@pytest.mark.slow
def test_mse_on_expert_data_reaches_corners():
    ds = generate_dataset("mo-lineworld", 200, quality_mix=1.0, noise_scale=0.0,
                          pref_sampler="uniform", seed=0)
    res = train(TrainConfig("mo-lineworld", "mse", total_iterations=20000, seed=0), ds)
    # default weight; at w_bc = 1 the task part of the input is zero for every preference
    rows = dict((tuple(p.weights), r) for p, r in evaluate_policy(res.bundle, 3, 3))
    assert rows[(1.0, 0.0)][0] >= 0.9 * 32
    assert rows[(0.0, 1.0)][1] >= 0.9 * 32
