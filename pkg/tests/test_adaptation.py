import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import truncnorm

from promorl.adaptation import (AdaptConfig, TruncatedGaussian, adapt, adapt_many, oracle_wbc,
                                sample_truncated)
from promorl.errors import InvalidArgumentError
from promorl.trainer import PolicyBundle, TrainConfig


def linear_utility(slope):
    def fn(targets, wbcs, rng):
        return slope * np.asarray(wbcs)
    return fn


@given(st.floats(-0.5, 1.5), st.floats(0.02, 1.0))
def test_truncated_mean_matches_scipy(mu, sigma):
    g = TruncatedGaussian(mu, sigma, 0.2, 1.0)
    a, b = (0.2 - mu) / sigma, (1.0 - mu) / sigma
    ref = truncnorm.mean(a, b, loc=mu, scale=sigma)
    assert g.mean() == pytest.approx(ref, abs=1e-7)


@given(st.floats(0.0, 1.2), st.floats(0.05, 0.8), st.floats(0.2, 1.0))
def test_score_matches_numerical_gradient(mu, sigma, x):
    g = TruncatedGaussian(mu, sigma)
    h = 1e-6

    def logpdf(m, log_s):
        s = np.exp(log_s)
        return truncnorm.logpdf(x, (0.2 - m) / s, (1.0 - m) / s, loc=m, scale=s)

    ls = np.log(sigma)
    num_mu = (logpdf(mu + h, ls) - logpdf(mu - h, ls)) / (2 * h)
    num_ls = (logpdf(mu, ls + h) - logpdf(mu, ls - h)) / (2 * h)
    d_mu, d_ls = g.score(x)
    assert d_mu == pytest.approx(num_mu, rel=1e-4, abs=1e-5)
    assert d_ls == pytest.approx(num_ls, rel=1e-4, abs=1e-5)


def test_tiny_sigma_samples_collapse(rng):
    g = TruncatedGaussian(0.55, 1e-6)
    s = sample_truncated(g, rng, size=200)
    np.testing.assert_allclose(s, 0.55, atol=1e-5)


def test_samples_stay_in_bounds(rng):
    far = TruncatedGaussian(-5.0, 0.1)  # every draw misses, clamped fallback
    s = sample_truncated(far, rng, size=20)
    assert np.all((s >= 0.2) & (s <= 1.0))
    with pytest.raises(InvalidArgumentError):
        TruncatedGaussian(0.5, 0.0)
    with pytest.raises(InvalidArgumentError):
        AdaptConfig(iterations=0)


def test_budget_is_n_times_k():
    rep = adapt(None, [0.5, 0.5], N=3, K=10, utility_fn=linear_utility(1.0))
    assert rep.n_trajectories == 30
    assert len(rep.iterations) == 3


def test_decreasing_utility_lowers_mu():
    rep = adapt(None, [0.5, 0.5], N=5, K=20, utility_fn=linear_utility(-1.0), seed=1)
    assert rep.final_wbc < 0.6
    up = adapt(None, [0.5, 0.5], N=5, K=20, utility_fn=linear_utility(1.0), seed=1)
    assert up.final_wbc > 0.6


def test_flat_utility_barely_moves():
    rep = adapt(None, [0.5, 0.5], N=5, K=10, utility_fn=lambda t, w, r: np.ones(len(w)))
    assert abs(rep.final_wbc - 0.6) <= 2 * 0.2


def test_final_wbc_within_bounds():
    for slope in (-100.0, 100.0):
        rep = adapt(None, [1.0, 0.0], N=10, K=5, utility_fn=linear_utility(slope),
                    learning_rate=5.0)
        assert 0.2 <= rep.final_wbc <= 1.0


def test_oracle_picks_endpoint_and_breaks_ties_upwards():
    assert oracle_wbc(None, [0.5, 0.5], utility_fn=linear_utility(1.0)) == pytest.approx(1.0)
    assert oracle_wbc(None, [0.5, 0.5], utility_fn=linear_utility(-1.0)) == pytest.approx(0.2)
    flat = oracle_wbc(None, [0.5, 0.5], utility_fn=lambda t, w, r: np.zeros(len(w)))
    assert flat == pytest.approx(1.0)


def test_adaptation_leaves_policy_untouched():
    b = PolicyBundle(TrainConfig("mo-lineworld", hidden=(8,)))
    before = b.param_fingerprint()
    reps = adapt_many(b, [[1.0, 0.0], [0.3, 0.7]], AdaptConfig(iterations=2, trajectories=3))
    assert b.param_fingerprint() == before
    assert all(0.2 <= r.final_wbc <= 1.0 for r in reps)
    assert reps[0].to_dict()["target_pref"] == [1.0, 0.0]
