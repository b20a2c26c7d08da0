import math

import numpy as np
import pytest

from smdpopt.model import PureStrategy, ValidationError, kernel_at, load_model
from smdpopt.oracle import random_finite_model, recurrent_states
from smdpopt.testfn import (DegenerateChainError, ProductEvaluator, cofactor_weights_det,
                            cofactor_weights_perm, integrands, integrands_on_product, minor_weights)

AB = PureStrategy([0.0, 0.0])


def test_worked_instance(two_state):
    e = integrands(two_state, AB)
    assert math.isclose(e.A, 3.7, rel_tol=1e-14)
    assert math.isclose(e.B, 1.9, rel_tol=1e-14)
    assert math.isclose(e.C, 37 / 19, rel_tol=1e-12)
    np.testing.assert_allclose(e.weights.w, [0.6, 0.7], rtol=1e-14)
    assert e.flags == ()


def test_permutation_route_sign(two_state):
    np.testing.assert_allclose(cofactor_weights_perm(two_state, AB).w, [0.6, -0.7], rtol=1e-14)


def test_single_state():
    m = load_model({"states": 1, "decision_spaces": [{"type": "finite", "points": [{"label": "a", "value": 0}]}],
                    "p": [{"a": [1]}], "T": [{"a": 2}], "d": [{"a": 5}]})
    e = integrands(m, PureStrategy([0.0]))
    assert e.weights.w.tolist() == [1.0] and e.C == 2.5
    assert cofactor_weights_perm(m, PureStrategy([0.0])).w.tolist() == [1.0]


def test_weights_proportional_to_stationary(rng):
    for n in range(2, 7):
        m = random_finite_model(rng, n)
        s = PureStrategy([float(rng.integers(len(sp))) for sp in m.spaces])
        w = cofactor_weights_det(m, s).w
        P, _, _ = kernel_at(m, s)
        pi = w / w.sum()
        np.testing.assert_allclose(pi @ P, pi, atol=1e-14)


def test_sign_pattern_alternates(rng):
    for n in range(2, 8):
        m = random_finite_model(rng, n)
        s = PureStrategy([0.0] * n)
        det = cofactor_weights_det(m, s).w
        perm = cofactor_weights_perm(m, s).w
        np.testing.assert_allclose(perm, det * (-1.0) ** np.arange(n), rtol=1e-11)


def test_permutation_route_refuses_large_n(rng):
    m = random_finite_model(rng, 10, max_points=1)
    with pytest.raises(ValueError):
        cofactor_weights_perm(m, PureStrategy([0.0] * 10))


def _doc(p, T=None, d=None):
    n = len(p)
    return {"states": n,
            "decision_spaces": [{"type": "finite", "points": [{"label": "a", "value": 0}]}] * n,
            "p": [{"a": row} for row in p], "T": [{"a": t} for t in (T or [1] * n)],
            "d": [{"a": x} for x in (d or list(range(n)))]}


def test_two_closed_classes_is_degenerate():
    m = load_model(_doc([[1, 0, 0], [0, 1, 0], [0.5, 0.25, 0.25]]))
    with pytest.raises(DegenerateChainError) as info:
        integrands(m, PureStrategy([0.0] * 3))
    assert info.value.condition == 4
    assert isinstance(info.value, ValidationError)


def test_transient_states_flagged():
    m = load_model(_doc([[0.5, 0.5, 0], [0.5, 0.5, 0], [0.2, 0.3, 0.5]], T=[1, 2, 3], d=[4, 5, 6]))
    e = integrands(m, PureStrategy([0.0] * 3))
    assert e.flags == ("transient_states",)
    assert e.weights.w[2] == 0.0
    assert math.isclose(e.C, 4.5 / 1.5, rel_tol=1e-14)
    assert recurrent_states(kernel_at(m, PureStrategy([0.0] * 3))[0]).tolist() == [True, True, False]


def test_minor_weights_batched(rng):
    P = rng.dirichlet(np.ones(4), size=(3, 5, 4))
    w = minor_weights(P)
    assert w.shape == (3, 5, 4)
    np.testing.assert_array_equal(w[1, 2], minor_weights(P[1, 2]))


def test_product_matches_pointwise(choice):
    axes = [list(s.values) for s in choice.spaces]
    ev = integrands_on_product(choice, axes)
    assert ev.C.shape == (6,) and ev.failed_points == 0
    for flat in range(6):
        e = integrands(choice, ev.point(flat))
        assert math.isclose(ev.C[flat], e.C, rel_tol=1e-15)


def test_product_independent_of_workers_and_chunking(data):
    m = load_model(data / "parabola.json")
    axes = [np.linspace(0, 1, 301).tolist(), [0.0, 1.0]]
    ev = ProductEvaluator(m, axes)
    one = np.concatenate(ev.map_chunks(lambda s, A, B, C: C, workers=1, chunk=37))
    many = np.concatenate(ev.map_chunks(lambda s, A, B, C: C, workers=4, chunk=37))
    whole = integrands_on_product(m, axes).C
    assert one.tobytes() == many.tobytes() == whole.tobytes()


def test_failed_points_are_nan():
    # singular at a point the validation grid never visits
    m = load_model({"states": 1, "decision_spaces": [{"type": "interval", "low": 0, "high": 1}],
                    "p": [["1"]], "T": ["1"], "d": ["1/(u - 0.125)"]})
    ev = integrands_on_product(m, [[0.0, 0.125, 1.0]])
    assert ev.failed_points == 1
    assert np.isnan(ev.C[1]) and np.isnan(ev.A[1]) and np.isfinite(ev.C[[0, 2]]).all()


def test_positive_weights_are_the_recurrent_states(rng):
    # sparse random chains: some states transient, one closed class
    checked = 0
    for _ in range(300):
        n = int(rng.integers(2, 7))
        P = rng.random((n, n)) * (rng.random((n, n)) < 0.4)
        P[np.arange(n), rng.integers(n, size=n)] += 0.1
        P /= P.sum(axis=1, keepdims=True)
        rec = recurrent_states(P)
        w = minor_weights(P)
        if w.max() < 1e-12:
            continue  # several closed classes
        checked += 1
        assert ((w > 1e-12) == rec).all()
    assert checked > 100


def test_denominator_positive(rng):
    for _ in range(100):
        m = random_finite_model(rng, int(rng.integers(1, 7)))
        s = PureStrategy([float(rng.integers(len(sp))) for sp in m.spaces])
        assert integrands(m, s).B > 0
