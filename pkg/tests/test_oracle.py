import math

import numpy as np
import pytest

from smdpopt.measures import degenerate
from smdpopt.model import MixedStrategy, PureStrategy, ValidationError, load_model
from smdpopt.oracle import (averaged_kernel, gth_stationary, random_finite_model, ratio_value,
                            recurrent_states, sample_mixed_strategies, simulate,
                            stationary_distribution)
from smdpopt.testfn import integrands

AB = degenerate(PureStrategy([0.0, 0.0]))


def test_stationary_examples():
    st = stationary_distribution([[0.3, 0.7], [0.6, 0.4]])
    assert st.uniqueness_ok
    np.testing.assert_allclose(st.pi, [6 / 13, 7 / 13], rtol=1e-14)
    assert not stationary_distribution(np.eye(2)).uniqueness_ok
    D = np.array([[0.2, 0.5, 0.3], [0.5, 0.1, 0.4], [0.3, 0.4, 0.3]])
    np.testing.assert_allclose(stationary_distribution(D).pi, [1 / 3] * 3, rtol=1e-14)


def test_stationary_fixed_point(rng):
    for n in range(1, 9):
        P = rng.dirichlet(np.ones(n), size=n)
        st = stationary_distribution(P)
        assert st.uniqueness_ok
        np.testing.assert_allclose(st.pi @ P, st.pi, atol=1e-14)
        assert math.isclose(st.pi.sum(), 1.0, rel_tol=1e-15)
        np.testing.assert_allclose(gth_stationary(P), st.pi, rtol=1e-10)


def test_gth_with_transient_states():
    P = np.array([[0.2, 0.8, 0.0], [0.0, 1.0, 0.0], [0.3, 0.3, 0.4]])
    np.testing.assert_allclose(gth_stationary(P), [0, 1, 0], atol=1e-15)
    assert recurrent_states(P).tolist() == [False, True, False]


def test_ratio_value(two_state):
    assert math.isclose(ratio_value(two_state, AB), 37 / 19, rel_tol=1e-12)
    one = load_model({"states": 1, "decision_spaces": [{"type": "finite", "points": [{"label": "a", "value": 0}]}],
                      "p": [{"a": [1]}], "T": [{"a": 4}], "d": [{"a": 3}]})
    assert ratio_value(one, degenerate(PureStrategy([0.0]))) == 0.75


def test_ratio_value_matches_testfn(rng):
    for _ in range(30):
        m = random_finite_model(rng, int(rng.integers(2, 7)))
        s = PureStrategy([float(rng.integers(len(sp))) for sp in m.spaces])
        assert math.isclose(ratio_value(m, degenerate(s)), integrands(m, s).C, rel_tol=1e-10)


def test_ratio_value_rejects_two_classes():
    doc = {"states": 2,
           "decision_spaces": [{"type": "finite", "points": [{"label": "a", "value": 0}]}] * 2,
           "p": [{"a": [1, 0]}, {"a": [0, 1]}], "T": [{"a": 1}, {"a": 1}], "d": [{"a": 1}, {"a": 2}]}
    with pytest.raises(ValidationError):
        ratio_value(load_model(doc), degenerate(PureStrategy([0.0, 0.0])))


def test_averaged_kernel(choice):
    psi = MixedStrategy([[(1.0, 0.5), (2.0, 0.5)], [(0.0, 1.0)], [(0.0, 1.0)]])
    P, T, d = averaged_kernel(choice, psi)
    np.testing.assert_allclose(P[0], [0.35, 0.45, 0.2], rtol=1e-15)
    assert T[0] == 2.25 and d[0] == 5.0


def test_sampling(choice):
    assert sample_mixed_strategies(choice, 0, 3, seed=1) == []
    a = sample_mixed_strategies(choice, 20, 3, seed=7)
    b = sample_mixed_strategies(choice, 20, 3, seed=7)
    assert [x.support for x in a] == [x.support for x in b]
    for psi in a:
        for i in range(choice.n):
            assert abs(math.fsum(psi.weights(i)) - 1) <= 1e-12


def test_sampling_intervals(data):
    m = load_model(data / "open_linear.json")
    for psi in sample_mixed_strategies(m, 50, 4, seed=2):
        assert all(0 < u < 1 for u in psi.points(0))


def test_simulate_single_state_deterministic():
    m = load_model({"states": 1, "decision_spaces": [{"type": "finite", "points": [{"label": "a", "value": 0}]}],
                    "p": [{"a": [1]}], "T": [{"a": 2}], "d": [{"a": 5}]})
    for jumps in (1, 7, 1000):
        r = simulate(m, degenerate(PureStrategy([0.0])), jumps, seed=1, sojourn_mode="deterministic")
        assert r.empirical_ratio == 2.5 and r.jumps == jumps


def test_simulate_reward_is_sum_of_increments(choice):
    psi = MixedStrategy([[(1.0, 0.5), (2.0, 0.5)], [(0.0, 0.2), (1.0, 0.3), (2.0, 0.5)], [(0.0, 1.0)]])
    r = simulate(choice, psi, 5000, seed=3)
    # rewards are integers here, so the total is exact
    assert r.total_reward == round(r.total_reward)


def test_simulate_reproducible(two_state):
    a = simulate(two_state, AB, 10_000, seed=42)
    b = simulate(two_state, AB, 10_000, seed=42)
    c = simulate(two_state, AB, 10_000, seed=43)
    assert a == b and a != c


def test_simulate_initial_reward(two_state):
    a = simulate(two_state, AB, 1000, seed=4)
    b = simulate(two_state, AB, 1000, seed=4, initial_reward=10.0)
    assert b.total_reward == a.total_reward + 10.0


def test_simulate_converges(two_state):
    for mode in ("exponential", "deterministic"):
        r = simulate(two_state, AB, 200_000, seed=9, sojourn_mode=mode)
        assert abs(r.empirical_ratio - 37 / 19) <= 3 * r.half_width_95
        assert abs(r.empirical_ratio - 37 / 19) / (37 / 19) < 0.01


def test_simulate_rejects_zero_jumps(two_state):
    with pytest.raises(ValueError):
        simulate(two_state, AB, 0, seed=1)
