import json
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from promorl.core import Preference, preference_grid
from promorl.envs import get_spec, oracle_pareto_front
from promorl.errors import InvalidArgumentError, UnsupportedError
from promorl.metrics import (ParetoFront, expected_utility, front_summary, hypervolume,
                             hypervolume_exact, hypervolume_mc, pareto_filter, read_front,
                             sparsity, sparsity_raw, write_front)

from oracles import brute_pareto, hand_sparsity, inclusion_exclusion_hv

STAIR = np.array([[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]])


def as_set(a):
    return sorted(map(tuple, np.asarray(a)))


def test_pareto_filter_examples():
    pts = np.vstack([STAIR, [[1.0, 1.0]]])
    assert as_set(pareto_filter(pts)) == as_set(STAIR)
    assert as_set(pareto_filter([[2.0, 5.0]])) == [(2.0, 5.0)]
    assert len(pareto_filter(np.ones((4, 3)))) == 1
    assert pareto_filter(np.zeros((0, 2))).shape == (0, 2)


def test_hypervolume_examples():
    assert hypervolume_exact([[1.0, 1.0]], [0, 0]) == 1.0
    assert hypervolume_exact(STAIR, [0, 0]) == 6.0
    assert hypervolume_exact(np.zeros((0, 2)), [0, 0]) == 0.0
    est, se = hypervolume_mc(STAIR, [0, 0], n_samples=1_000_000, rng=np.random.default_rng(0))
    assert abs(est - 6.0) / 6.0 < 0.005


def test_hypervolume_ignores_points_not_above_reference():
    assert hypervolume_exact([[1.0, 3.0], [-1.0, 5.0], [2.0, 0.0]], [0, 0]) == 3.0


def test_hypervolume_3d_and_unsupported():
    pts = np.array([[1.0, 2.0, 3.0], [3.0, 1.0, 2.0], [2.0, 3.0, 1.0]])
    assert hypervolume_exact(pts, np.zeros(3)) == pytest.approx(inclusion_exclusion_hv(pts, np.zeros(3)))
    with pytest.raises(UnsupportedError):
        hypervolume_exact(np.ones((2, 4)), np.zeros(4))
    est, _ = hypervolume_mc(np.ones((2, 4)), np.zeros(4))
    assert est == pytest.approx(1.0)


def test_hypervolume_front_modes():
    f = ParetoFront(STAIR, np.zeros(2))
    assert hypervolume(f) == 6.0
    assert hypervolume(f, "mc", 200_000, np.random.default_rng(1)) == pytest.approx(6.0, rel=0.02)
    with pytest.raises(InvalidArgumentError):
        hypervolume(f, "bogus")


def test_sparsity_examples():
    assert sparsity(STAIR) == 2.0
    assert sparsity([[1.0, 2.0]]) == 0.0
    assert sparsity([[1.0, 2.0], [1.0, 2.0]]) == 0.0
    # dominated points are dropped before the filtered value, kept in the raw one
    pts = np.vstack([STAIR, [[0.5, 0.5]]])
    assert sparsity(pts) == 2.0
    assert sparsity_raw(pts) == pytest.approx(hand_sparsity(pts))


def test_expected_utility_examples():
    grid = preference_grid(2, 11)
    assert expected_utility([(p, np.ones(2)) for p in grid]) == pytest.approx(1.0)
    eu = expected_utility([(Preference([1, 0]), np.array([4.0, 0.0])),
                           (Preference([0, 1]), np.array([0.0, 2.0]))])
    assert eu == 3.0
    with pytest.warns(UserWarning, match="equidistant"):
        expected_utility([(Preference([0.3, 0.7]), np.ones(2)), (Preference([1, 0]), np.ones(2))])
    with pytest.raises(InvalidArgumentError):
        expected_utility([])


def test_expected_utility_on_lineworld_oracle_matches_integral():
    front = oracle_pareto_front(get_spec("mo-lineworld"))
    grid = preference_grid(2, 101)
    evals = [(p, front[np.argmax(front @ p.weights)]) for p in grid]
    # max(32 w, 32 (1 - w)) integrates to 24 over w in [0, 1]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        eu = expected_utility(evals)
    assert abs(eu - 24.0) / 24.0 < 0.01


def test_front_file_roundtrip(tmp_path):
    evals = [(p, np.array([10 * p.weights[0], 5 * p.weights[1]])) for p in preference_grid(2, 5)]
    side = write_front(tmp_path / "f.csv", evals, [0, 0], {"seed": 3, "config_hash": "abc"})
    back = read_front(tmp_path / "f.csv")
    for (p, r), (q, s) in zip(evals, back):
        np.testing.assert_array_equal(p.weights, q)
        np.testing.assert_array_equal(r, s)
    stored = json.loads((tmp_path / "f.json").read_text())
    assert stored["reference_point"] == [0.0, 0.0] and stored["seed"] == 3
    assert {"hv", "sp_filtered", "sp_raw", "eu"} <= set(stored)
    assert side["hv"] == front_summary(evals, [0, 0])["hv"]


# ------------------------------------------------------------------ properties

int_pts = st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=12)
real_pts = arrays(float, st.tuples(st.integers(1, 12), st.just(2)), elements=st.floats(0.0, 10.0))


@given(int_pts)
def test_pareto_filter_matches_brute_force_on_ties(pts):
    assert as_set(pareto_filter(np.array(pts, float))) == brute_pareto(pts)


@given(arrays(float, st.tuples(st.integers(1, 12), st.integers(2, 4)),
              elements=st.integers(0, 3).map(float)))
def test_pareto_filter_matches_brute_force_nd(pts):
    assert as_set(pareto_filter(pts)) == brute_pareto(pts)


@given(real_pts)
def test_hv_matches_inclusion_exclusion(pts):
    filtered = pareto_filter(pts)
    if len(filtered) <= 8:
        assert hypervolume_exact(pts, [0, 0]) == pytest.approx(
            inclusion_exclusion_hv(filtered, np.zeros(2)), abs=1e-9)


@given(real_pts, arrays(float, 2, elements=st.floats(0.0, 10.0)))
def test_hv_monotone_under_insertion(pts, extra):
    base = hypervolume_exact(pts, [0, 0])
    grown = hypervolume_exact(np.vstack([pts, extra]), [0, 0])
    assert grown >= base - 1e-12
    front = pareto_filter(pts)
    dominated = front[0] * 0.5
    assert hypervolume_exact(np.vstack([pts, dominated]), [0, 0]) == pytest.approx(base, abs=1e-12)


@given(real_pts, arrays(float, 2, elements=st.floats(-5.0, 5.0)))
def test_hv_translation_covariance(pts, shift):
    a = hypervolume_exact(pts, [0, 0])
    b = hypervolume_exact(pts + shift, shift)
    assert a == pytest.approx(b, abs=1e-9 * max(1.0, a))


@given(real_pts, st.randoms())
def test_sparsity_order_and_axis_invariance(pts, rnd):
    perm = list(range(len(pts)))
    rnd.shuffle(perm)
    assert sparsity(pts[perm]) == pytest.approx(sparsity(pts), abs=1e-12)
    assert sparsity(pts[:, ::-1]) == pytest.approx(sparsity(pts), abs=1e-12)
    assert sparsity(pts) == pytest.approx(hand_sparsity(brute_pareto(pts)), abs=1e-9)
