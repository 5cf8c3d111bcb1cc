import numpy as np
import pytest
from hypothesis import given, strategies as st

from promorl import autodiff as ad
from promorl.errors import InvalidArgumentError, NonFiniteGradientError, ParseError
from promorl.nn import (Mlp, MlpConfig, OptimizerState, adam_step, finite_diff_check, flat_params,
                        load_checkpoint, polyak_update, save_checkpoint, zero_grad)


def test_identity_linear_layer():
    x = np.array([[1.5, -2.0]])
    w = ad.parameter(np.eye(2))
    b = ad.parameter(np.zeros(2))
    np.testing.assert_array_equal(ad.linear(ad.tensor(x), w, b).data, x)


def test_zero_final_layer_gives_zero_output(rng):
    net = Mlp(MlpConfig((3, 8, 2)), rng)
    net.zero_last_layer()
    np.testing.assert_array_equal(net.predict(rng.normal(size=(5, 3))), 0.0)


def test_two_layer_net_hand_computation(rng):
    net = Mlp(MlpConfig((2, 2, 1)), rng)
    w1 = np.array([[1.0, -1.0], [2.0, 0.5]])
    b1 = np.array([0.0, 0.25])
    w2 = np.array([[3.0], [-2.0]])
    b2 = np.array([0.5])
    for p, v in zip(net.params, (w1, b1, w2, b2)):
        p.data[...] = v
    # hidden = relu([1+2, -1+0.5+0.25]) = [3, 0]; out = 9 + 0.5
    assert net.predict(np.array([[1.0, 1.0]]))[0, 0] == 9.5
    assert net.forward(np.array([[1.0, 1.0]])).data[0, 0] == 9.5


def test_linear_gradient_is_input():
    x = np.array([0.3, -1.2, 2.0])
    w = ad.parameter(np.array([1.0, 2.0, 3.0]))
    ad.backward(ad.tsum(ad.mul(w, x)))
    np.testing.assert_array_equal(w.grad, x)


def test_disconnected_parameter_has_zero_gradient(rng):
    a = Mlp(MlpConfig((2, 4, 1)), rng, "a")
    b = Mlp(MlpConfig((2, 4, 1)), rng, "b")
    zero_grad(a.params + b.params)
    ad.backward(ad.tmean(a.forward(rng.normal(size=(3, 2)))))
    assert all(p.grad is None or not np.any(p.grad) for p in b.params)


@pytest.mark.parametrize("activation", ["relu", "tanh", "mish"])
def test_regression_loss_gradients(activation):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100 if activation == "relu" else 20):
        net = Mlp(MlpConfig((3, 5, 4, 2), activation), rng)
        x = rng.normal(size=(6, 3))
        y = rng.normal(size=(6, 2))
        if activation == "relu":
            # nudge first-layer pre-activations 1e-3 off the relu kink
            pre = x @ net.params[0].data + net.params[1].data
            net.params[1].data += np.where(np.abs(pre) < 1e-3, 1e-3, 0.0).max(axis=0)

        def f():
            return ad.tsum(ad.square(ad.sub(y, net.forward(x))))

        worst = max(worst, finite_diff_check(f, net.params))
    assert worst < 1e-4


def test_finite_diff_on_quadratic():
    p = ad.parameter(np.array([0.3, -0.7, 1.1]))
    assert finite_diff_check(lambda: ad.tsum(ad.square(p)), [p]) < 1e-7


def test_elementwise_op_gradients(rng):
    x = ad.parameter(rng.uniform(0.5, 1.5, size=(3, 4)))
    y = ad.parameter(rng.uniform(0.5, 1.5, size=(4,)))
    ops = [
        lambda: ad.tsum(ad.div(ad.exp(x), ad.add(y, 1.0))),
        lambda: ad.tsum(ad.mul(ad.log(x), ad.sqrt(y))),
        lambda: ad.tmean(ad.power(ad.softplus(ad.sub(x, y)), 3.0)),
        lambda: ad.tsum(ad.getitem(ad.concat([x, ad.tanh(x)], 1), (slice(None), slice(2, 6)))),
        lambda: ad.tsum(ad.matmul(x, ad.neg(ad.tensor(np.ones((4, 2)))))),
        lambda: ad.tsum(ad.where(x.data > 1.0, ad.square(x), ad.mish(x))),
        lambda: ad.tsum(ad.clip(x, 0.6, 1.4)),
        lambda: ad.tsum(ad.tmean(ad.mul(x, y), axis=1, keepdims=True)),
    ]
    for f in ops:
        assert finite_diff_check(f, [x, y]) < 1e-6


def test_adam_zero_gradient_keeps_params():
    p = ad.parameter(np.array([1.0, -2.0]))
    st_ = OptimizerState.for_params([p], learning_rate=0.1)
    st_.m[0][...] = 1.0
    adam_step(st_, [p], [np.zeros(2)])
    np.testing.assert_allclose(st_.m[0], 0.9)
    # the decayed moment still moves the parameter; with fresh moments it would not
    fresh = ad.parameter(np.array([1.0, -2.0]))
    s2 = OptimizerState.for_params([fresh])
    adam_step(s2, [fresh], [np.zeros(2)])
    np.testing.assert_array_equal(fresh.data, [1.0, -2.0])


def test_adam_moves_against_constant_gradient():
    p = ad.parameter(np.zeros(3))
    s = OptimizerState.for_params([p], learning_rate=0.01)
    g = np.array([2.0, -0.5, 1e-3])
    for _ in range(50):
        adam_step(s, [p], [g])
    np.testing.assert_array_equal(np.sign(p.data), -np.sign(g))


def test_adam_single_step_hand_reference():
    p = ad.parameter(np.array([0.5, 0.5]))
    s = OptimizerState.for_params([p], learning_rate=1e-3)
    g = np.array([0.2, -3.0])
    adam_step(s, [p], [g])
    m_hat = (0.1 * g) / 0.1
    v_hat = (0.001 * g * g) / 0.001
    np.testing.assert_allclose(p.data, 0.5 - 1e-3 * m_hat / (np.sqrt(v_hat) + 1e-8), rtol=1e-12)


def test_adam_rejects_non_finite():
    p = ad.parameter(np.zeros(2), name="w")
    s = OptimizerState.for_params([p])
    with pytest.raises(NonFiniteGradientError, match="w"):
        adam_step(s, [p], [np.array([np.nan, 0.0])])
    np.testing.assert_array_equal(p.data, 0.0)


def test_polyak_examples():
    t, o = ad.parameter(np.zeros(2)), ad.parameter(np.ones(2))
    polyak_update([t], [o], 0.005)
    np.testing.assert_allclose(t.data, 0.005)
    polyak_update([t], [o], 1.0)
    np.testing.assert_array_equal(t.data, 1.0)
    t = ad.parameter(np.zeros(1))
    polyak_update([t], [o.__class__(np.ones(1), True)], 0.5)
    polyak_update([t], [o.__class__(np.ones(1), True)], 0.5)
    assert t.data[0] == 0.75
    with pytest.raises(InvalidArgumentError):
        polyak_update([t], [o], 0.0)


def test_mlp_config_validation():
    for widths in ((2, 3), (2, 0, 1)):
        with pytest.raises(InvalidArgumentError):
            MlpConfig(widths)
    with pytest.raises(InvalidArgumentError):
        MlpConfig((2, 3, 1), "sigmoid")


def test_initialization_is_seeded_and_bounded():
    a = Mlp(MlpConfig((4, 16, 2)), np.random.default_rng(3))
    b = Mlp(MlpConfig((4, 16, 2)), np.random.default_rng(3))
    np.testing.assert_array_equal(flat_params(a.params), flat_params(b.params))
    assert np.all(np.abs(a.params[0].data) <= 0.5) and np.all(np.abs(a.params[2].data) <= 0.25)


def test_predict_matches_forward(rng):
    net = Mlp(MlpConfig((3, 7, 7, 2), "mish", "tanh"), rng)
    x = rng.normal(size=(9, 3))
    np.testing.assert_allclose(net.predict(x), net.forward(x).data, atol=1e-14)


def test_checkpoint_roundtrip(tmp_path, rng):
    net = Mlp(MlpConfig((3, 4, 2)), rng)
    named = [(p.name, p.data) for p in net.params]
    save_checkpoint(tmp_path / "c.bin", {"kind": "test", "seed": 1}, named)
    header, blocks = load_checkpoint(tmp_path / "c.bin")
    assert header["kind"] == "test"
    for (n1, a1), (n2, a2) in zip(named, blocks):
        assert n1 == n2
        np.testing.assert_array_equal(a1, a2)
    raw = (tmp_path / "c.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-8])
    with pytest.raises(ParseError):
        load_checkpoint(tmp_path / "t.bin")
    (tmp_path / "g.bin").write_bytes(b"garbage")
    with pytest.raises(ParseError):
        load_checkpoint(tmp_path / "g.bin")


@given(st.integers(0, 2**32 - 1))
def test_mlp_gradient_property(seed):
    rng = np.random.default_rng(seed)
    net = Mlp(MlpConfig((2, 3, 1), "tanh"), rng)
    x = rng.normal(size=(4, 2))
    assert finite_diff_check(lambda: ad.tmean(ad.square(net.forward(x))), net.params) < 1e-4
