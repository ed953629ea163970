import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from tpfl import tm
from tpfl.tm import (
    ClassWeightVector,
    EmptyEvaluationWarning,
    TMModel,
    TsetlinMachineClassifier,
    append_negations,
)


def naive_margin(model, c, literals):
    """Clause-by-clause, literal-by-literal weighted vote count."""
    total = 0
    for j in range(model.n_clauses):
        included = [k for k in range(model.n_literals) if model.ta_states[c, j, k] > model.n_states]
        fires = bool(included) and all(literals[k] == 1 for k in included)
        if fires:
            sign = 1 if j % 2 == 0 else -1
            total += sign * int(model.weights[c, j])
    return total


def random_model(rng, C=None, n=None, o=None, N=None, include_p=None):
    C = C or int(rng.integers(1, 5))
    n = n or 2 * int(rng.integers(1, 6))
    o = o or int(rng.integers(1, 7))
    N = N or int(rng.integers(1, 128))
    include_p = rng.uniform(0.05, 0.5) if include_p is None else include_p
    inc = rng.random((C, n, 2 * o)) < include_p
    ta = np.where(inc, rng.integers(N + 1, 2 * N + 1, inc.shape), rng.integers(1, N + 1, inc.shape))
    w = rng.integers(1, 50, (C, n))
    return TMModel(C, n, o, T=int(rng.integers(1, 100)), s=3.0, n_states=N, ta_states=ta, weights=w)


def random_literals(rng, o, m=None):
    shape = (o,) if m is None else (m, o)
    return append_negations((rng.random(shape) < 0.5).astype(np.uint8))


def model_with_margins(include):
    """One feature, two clauses; ``include[j]`` lists literal indices clause j includes."""
    model = TMModel(1, 2, 1, T=10, s=3.0, n_states=5)
    for j, lits in enumerate(include):
        for k in lits:
            model.ta_states[0, j, k] = 6
    return model


# clause evaluation

def test_clause_output_conjunction():
    model = model_with_margins([[0], [1]])
    x1 = np.array([1, 0], dtype=np.uint8)
    x0 = np.array([0, 1], dtype=np.uint8)
    assert tm.clause_output(model.bank(0), 0, x1) == 1
    assert tm.clause_output(model.bank(0), 1, x1) == 0
    assert tm.clause_output(model.bank(0), 0, x0) == 0
    assert tm.clause_output(model.bank(0), 1, x0) == 1


def test_clause_output_contradiction_never_fires():
    model = model_with_margins([[0, 1], []])
    for x in ([1, 0], [0, 1]):
        assert tm.clause_output(model.bank(0), 0, np.array(x, dtype=np.uint8)) == 0


def test_empty_clause_depends_on_mode():
    model = model_with_margins([[], []])
    x = np.array([1, 0], dtype=np.uint8)
    assert tm.clause_output(model.bank(0), 0, x, inference_mode=True) == 0
    assert tm.clause_output(model.bank(0), 0, x, inference_mode=False) == 1


def test_boundary_state_is_exclude():
    model = TMModel(1, 2, 1, n_states=5)
    model.ta_states[0, 0, 0] = 5
    assert not model.bank(0).includes()[0, 0]
    model.ta_states[0, 0, 0] = 6
    assert model.bank(0).includes()[0, 0]


def test_literal_length_checked():
    with pytest.raises(ValueError):
        tm.class_margins(TMModel(2, 2, 3), np.zeros(5, dtype=np.uint8))


def test_margin_examples():
    model = model_with_margins([[0], [0]])
    model.weights[0] = [7, 3]
    assert tm.class_margin(model, 0, [1, 0]) == 4
    assert tm.class_margin(model, 0, [0, 1]) == 0
    model = model_with_margins([[0], [1]])
    model.weights[0] = [7, 3]
    assert tm.class_margin(model, 0, [1, 0]) == 7
    assert tm.class_margin(model, 0, [0, 1]) == -3


def test_margin_matches_naive_oracle():
    rng = np.random.default_rng(11)
    for _ in range(300):
        model = random_model(rng)
        x = random_literals(rng, model.n_features)
        for c in range(model.n_classes):
            assert tm.class_margin(model, c, x) == naive_margin(model, c, x)


def test_batched_margins_match_single():
    rng = np.random.default_rng(3)
    model = random_model(rng, C=3, n=8, o=6, include_p=0.15)
    X = random_literals(rng, 6, m=5000)
    batch = tm.class_margins(model, X)
    for i in range(0, 5000, 97):
        assert np.array_equal(batch[i], tm.class_margins(model, X[i])[0])


# prediction

def test_predict_argmax_and_ties():
    model = TMModel(3, 2, 1, n_states=5)
    model.ta_states[1, 0, 0] = 6
    model.ta_states[2, 0, 0] = 6
    model.weights[1, 0] = 4
    model.weights[2, 0] = 9
    assert tm.predict(model, np.array([1, 0], dtype=np.uint8)) == 2
    model.weights[2, 0] = 4
    assert tm.predict(model, np.array([1, 0], dtype=np.uint8)) == 1
    # nothing fires: every margin is 0, lowest index wins
    assert tm.predict(model, np.array([0, 1], dtype=np.uint8)) == 0


def test_predict_batch_shape():
    model = TMModel(4, 2, 3)
    assert tm.predict(model, np.zeros((7, 6), dtype=np.uint8)).shape == (7,)


# training

def test_single_class_training_runs():
    rng = np.random.default_rng(0)
    model = TMModel(1, 4, 3, T=5, s=3.0, n_states=10)
    X = random_literals(rng, 3, m=50)
    tm.train_epoch(model, X, np.zeros(50, dtype=np.int64), rng)
    assert model.ta_states.min() >= 1 and model.ta_states.max() <= 20


def test_training_invariants_hold():
    rng = np.random.default_rng(5)
    model = TMModel(3, 6, 5, T=4, s=2.5, n_states=7)
    X = random_literals(rng, 5, m=10000)
    y = rng.integers(0, 3, 10000)
    tm.train_epoch(model, X, y, rng)
    assert model.ta_states.min() >= 1
    assert model.ta_states.max() <= 14
    assert model.weights.min() >= 1


def test_toy_problem_converges():
    rng = np.random.default_rng(2)
    X = (rng.random((40, 4)) < 0.5).astype(np.uint8)
    y = X[:, 0].astype(np.int64)
    lits = append_negations(X)
    model = TMModel(2, 10, 4, T=5, s=3.9, n_states=100)
    for _ in range(100):
        tm.train_epoch(model, lits, y, rng)
        if tm.evaluate_accuracy(model, lits, y) == 1.0:
            break
    assert tm.evaluate_accuracy(model, lits, y) == 1.0


def test_xor_learned():
    rng = np.random.default_rng(4)
    X = (rng.random((2000, 6)) < 0.5).astype(np.uint8)
    y = (X[:, 0] ^ X[:, 1]).astype(np.int64)
    clf = TsetlinMachineClassifier(n_clauses=20, T=15, s=3.9, n_epochs=30, random_state=1).fit(X, y)
    assert clf.score(X, y) > 0.95


def test_empty_epoch_is_noop():
    model = TMModel(2, 4, 3)
    before = model.copy()
    tm.train_epoch(model, np.zeros((0, 6), dtype=np.uint8), np.zeros(0, dtype=np.int64), np.random.default_rng(0))
    assert model == before


def test_training_deterministic():
    rng = np.random.default_rng(9)
    X = random_literals(rng, 8, m=300)
    y = rng.integers(0, 3, 300)
    models = []
    for _ in range(2):
        model = TMModel(3, 10, 8, T=10, s=4.0)
        r = np.random.default_rng(42)
        for _ in range(3):
            tm.train_epoch(model, X, y, r)
        models.append(model)
    assert models[0] == models[1]


def test_train_on_sample_touches_at_most_two_classes():
    rng = np.random.default_rng(0)
    model = TMModel(5, 4, 3, T=3, s=2.0, n_states=5)
    before = model.copy()
    tm.train_on_sample(model, random_literals(rng, 3), 2, rng)
    changed = [c for c in range(5) if not np.array_equal(model.ta_states[c], before.ta_states[c])
               or not np.array_equal(model.weights[c], before.weights[c])]
    assert 2 in changed or not changed
    assert len(changed) <= 2


def test_bad_labels_rejected():
    with pytest.raises(ValueError):
        tm.train_epoch(TMModel(2, 2, 1), np.zeros((1, 2), dtype=np.uint8), np.array([2]), np.random.default_rng(0))


def test_type_i_hit_rate_on_silent_clause():
    # a silent clause: each literal is pushed down with probability 1/s
    s, trials, o = 4.0, 400, 50
    rng = np.random.default_rng(8)
    drops = np.zeros(2 * o)
    for _ in range(trials):
        model = TMModel(1, 2, o, T=1, s=s, n_states=100)
        model.ta_states[0, 0, :] = 50
        model.ta_states[0, 0, 0] = 101  # includes x0, which is false below
        x = np.zeros(o, dtype=np.uint8)
        lits = append_negations(x)
        # the negative clause is empty, fires in training, and the margin -1 = -T gives p = 1
        tm.train_on_sample(model, lits, 0, rng)
        drops += model.ta_states[0, 0] < np.r_[101, np.full(2 * o - 1, 50)]
    rate = drops[1:].mean() / trials
    assert abs(rate - 1 / s) < 0.02


def test_type_i_reward_rate_on_firing_clause():
    # firing clause: true literals step up with probability (s-1)/s
    s, trials, o = 4.0, 400, 50
    rng = np.random.default_rng(9)
    ups = 0
    for _ in range(trials):
        model = TMModel(1, 2, o, T=1, s=s, n_states=100)
        model.ta_states[0, 0, :] = 50
        # the empty negative clause also fires with a larger weight, so the margin sits at -T and p = 1
        model.weights[0, 1] = 2
        lits = append_negations(np.ones(o, dtype=np.uint8))
        tm.train_on_sample(model, lits, 0, rng)
        ups += int((model.ta_states[0, 0, :o] == 51).sum())
    assert abs(ups / (trials * o) - (s - 1) / s) < 0.02


# accuracy and confidence

def test_accuracy_all_correct():
    model = TMModel(2, 2, 1, n_states=5)
    model.ta_states[0, 0, 1] = 6  # class 0 fires on x=0
    model.ta_states[1, 0, 0] = 6  # class 1 fires on x=1
    X = append_negations(np.array([[0], [1], [1], [0]], dtype=np.uint8))
    assert tm.evaluate_accuracy(model, X, [0, 1, 1, 0]) == 1.0
    assert tm.evaluate_accuracy(model, X, [1, 0, 0, 1]) == 0.0


def test_accuracy_matches_direct_simulation():
    rng = np.random.default_rng(1)
    model = random_model(rng, C=4, n=6, o=5)
    X = random_literals(rng, 5, m=200)
    y = rng.integers(0, 4, 200)
    direct = np.mean([
        int(np.argmax([naive_margin(model, c, x) for c in range(4)])) == label for x, label in zip(X, y)
    ])
    assert tm.evaluate_accuracy(model, X, y) == direct


def test_accuracy_of_empty_set_warns():
    with pytest.warns(EmptyEvaluationWarning):
        assert tm.evaluate_accuracy(TMModel(2, 2, 1), np.zeros((0, 2), dtype=np.uint8), []) == 0.0


def test_confidence_examples():
    model = TMModel(2, 2, 1, n_states=5)
    assert np.array_equal(tm.confidence_scores(model, np.zeros((0, 2), dtype=np.uint8)), [0, 0])
    model.ta_states[1, 0, 0] = 6
    model.weights[1, 0] = 3
    X = append_negations(np.ones((7, 1), dtype=np.uint8))
    assert np.array_equal(tm.confidence_scores(model, X), [0, 7])
    assert np.array_equal(tm.confidence_scores(model, X, weighted=True), [0, 21])


def test_confidence_matches_oracle():
    rng = np.random.default_rng(12)
    for _ in range(100):
        model = random_model(rng)
        X = random_literals(rng, model.n_features, m=int(rng.integers(1, 20)))
        ones = TMModel(model.n_classes, model.n_clauses, model.n_features, n_states=model.n_states,
                       ta_states=model.ta_states)
        expected = [sum(naive_margin(ones, c, x) for x in X) for c in range(model.n_classes)]
        assert np.array_equal(tm.confidence_scores(model, X), expected)


def test_argmax_confidence():
    assert tm.argmax_confidence([3, 9, 2]) == 1
    assert tm.argmax_confidence([5, 5, 1]) == 0
    assert tm.argmax_confidence([-4, -2, -2]) == 1
    with pytest.raises(ValueError):
        tm.argmax_confidence([])


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(-10**6, 10**6), min_size=1, max_size=20), st.integers(1, 1000))
def test_argmax_scale_invariant(scores, k):
    scores = np.array(scores, dtype=np.int64)
    assert tm.argmax_confidence(scores) == tm.argmax_confidence(scores * k)


# weight access

def test_class_weight_roundtrip_and_isolation():
    model = TMModel(3, 4, 2)
    vec = tm.get_class_weights(model, 1)
    vec.weights[:] = 99  # a copy, the model must not change
    assert model.weights.max() == 1
    tm.set_class_weights(model, ClassWeightVector(1, np.array([2, 3, 4, 5])))
    assert np.array_equal(tm.get_class_weights(model, 1).weights, [2, 3, 4, 5])
    assert np.all(model.weights[[0, 2]] == 1)


def test_set_class_weights_integerizes():
    model = TMModel(1, 4, 1)
    tm.set_class_weights(model, ClassWeightVector(0, np.array([2.5, 1.49, 1.0, 7.5])))
    assert np.array_equal(model.weights[0], [3, 1, 1, 8])
    assert np.array_equal(tm.integerize_weights([0.2, 0.5, 1.5]), [1, 1, 2])


def test_set_class_weights_rejects_bad_input():
    model = TMModel(2, 4, 1)
    with pytest.raises(ValueError):
        tm.set_class_weights(model, ClassWeightVector(0, np.ones(3)))
    with pytest.raises(IndexError):
        tm.set_class_weights(model, ClassWeightVector(5, np.ones(4)))
    with pytest.raises(ValueError):
        ClassWeightVector(0, np.array([1, 0, 2, 1]))


# snapshot

def test_snapshot_roundtrip():
    rng = np.random.default_rng(0)
    model = random_model(rng, C=3, n=6, o=4, N=127)
    blob = tm.to_bytes(model)
    assert blob[:7] == b"TPFLTM1"
    assert tm.from_bytes(blob) == model
    assert len(blob) == 7 + 5 * 4 + 8 + 3 * 6 * 8 + 4 * 3 * 6


def test_snapshot_rejects_wide_states_and_garbage():
    with pytest.raises(ValueError):
        tm.to_bytes(TMModel(1, 2, 1, n_states=200))
    blob = tm.to_bytes(TMModel(1, 2, 1))
    with pytest.raises(ValueError):
        tm.from_bytes(blob[:-1])
    with pytest.raises(ValueError):
        tm.from_bytes(b"XXXXXXX" + blob[7:])


# model validation

@pytest.mark.parametrize("kwargs", [
    dict(n_clauses=3), dict(n_clauses=0), dict(T=0), dict(s=1.0), dict(n_states=0), dict(n_classes=0),
])
def test_model_parameter_validation(kwargs):
    params = dict(n_classes=2, n_clauses=4, n_features=3) | kwargs
    with pytest.raises(ValueError):
        TMModel(**params)


# estimator

def test_estimator_params_and_clone():
    clf = TsetlinMachineClassifier(n_clauses=10, T=7, random_state=3)
    params = clf.get_params()
    assert params["n_clauses"] == 10 and params["T"] == 7
    assert clone(clf).get_params() == params


def test_estimator_validates_input():
    clf = TsetlinMachineClassifier(n_clauses=4, n_epochs=1)
    with pytest.raises(ValueError):
        clf.fit(np.array([[0, 2], [1, 0]]), [0, 1])
    clf.fit(np.array([[0, 1], [1, 0]]), [0, 1])
    with pytest.raises(ValueError):
        clf.predict(np.zeros((1, 3)))


def test_estimator_partial_fit_needs_classes():
    X = np.array([[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        TsetlinMachineClassifier(n_clauses=4).partial_fit(X, [0, 1])
    clf = TsetlinMachineClassifier(n_clauses=4, random_state=0).partial_fit(X, [0, 1], classes=[0, 1, 2])
    assert clf.decision_function(X).shape == (2, 3)


def test_estimator_is_deterministic():
    rng = np.random.default_rng(0)
    X = (rng.random((200, 10)) < 0.5).astype(np.uint8)
    y = X[:, 3].astype(int)
    a = TsetlinMachineClassifier(n_clauses=10, T=5, n_epochs=3, random_state=7).fit(X, y)
    b = TsetlinMachineClassifier(n_clauses=10, T=5, n_epochs=3, random_state=7).fit(X, y)
    assert a.model_ == b.model_
    assert np.array_equal(a.confidence_scores(X), b.confidence_scores(X))


def test_estimator_weights_access():
    X = np.array([[0, 1], [1, 0]])
    clf = TsetlinMachineClassifier(n_clauses=4, n_epochs=1, random_state=0).fit(X, [0, 1])
    vec = clf.get_class_weights(1)
    clf.set_class_weights(ClassWeightVector(1, np.full(4, 6)))
    assert np.all(clf.model_.weights[1] == 6)
    assert vec.weights.shape == (4,)


def test_no_warnings_on_normal_use():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        model = TMModel(2, 2, 1)
        tm.evaluate_accuracy(model, np.array([[1, 0]], dtype=np.uint8), [0])
