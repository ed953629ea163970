"""Compiled inner loops for clause evaluation and Type I / Type II feedback.

All randomness is drawn from the ``np.random.Generator`` passed in, in a fixed
order, so a seeded generator reproduces the same TA trajectories.
"""
import numba
import numpy as np


@numba.njit(nogil=True, cache=True)
def clause_fires(ta_row, literals, n_states, empty_output):
    """Conjunction of the included literals; ``empty_output`` when none are included."""
    included = False
    for k in range(ta_row.shape[0]):
        if ta_row[k] > n_states:
            if literals[k] == 0:
                return 0
            included = True
    return 1 if included else empty_output


@numba.njit(nogil=True, cache=True)
def _gap(rng, log_q):
    # failures before the next success of a Bernoulli(p) process, log_q = log(1 - p)
    return int(np.log1p(-rng.random()) / log_q)


@numba.njit(nogil=True, cache=True)
def _type_i(ta_row, literals, fired, log_q, max_state, rng):
    """Type I feedback driven by one Bernoulli(1/s) process over the literals.

    A hit pushes a TA toward exclusion. On a firing clause the true literals
    that are not hit (probability (s-1)/s each) step toward inclusion and hit
    false literals step toward exclusion; on a silent clause every hit steps
    toward exclusion. Hit positions are sampled by geometric gaps.
    """
    n_literals = ta_row.shape[0]
    hit = _gap(rng, log_q)
    if fired:
        for k in range(n_literals):
            if k == hit:
                hit = k + 1 + _gap(rng, log_q)
                if literals[k] == 0 and ta_row[k] > 1:
                    ta_row[k] -= 1
            elif literals[k] == 1 and ta_row[k] < max_state:
                ta_row[k] += 1
    else:
        while hit < n_literals:
            if ta_row[hit] > 1:
                ta_row[hit] -= 1
            hit += 1 + _gap(rng, log_q)


@numba.njit(nogil=True, cache=True)
def _type_ii(ta_row, literals, n_states):
    for k in range(ta_row.shape[0]):
        if literals[k] == 0 and ta_row[k] <= n_states:
            ta_row[k] += 1


@numba.njit(nogil=True, cache=True)
def update_bank(ta, weights, literals, is_target, T, s, n_states, outputs, rng):
    """Feedback to one class bank for one sample.

    ``ta`` is (n, 2o), ``weights`` is (n,). ``is_target`` selects the y=1 path
    (positive clauses get Type I, negative clauses Type II) or the y=0 path
    (roles swapped).
    """
    n = ta.shape[0]
    margin = 0
    for j in range(n):
        out = clause_fires(ta[j], literals, n_states, 1)
        outputs[j] = out
        if out:
            if j % 2 == 0:
                margin += weights[j]
            else:
                margin -= weights[j]
    if margin > T:
        margin = T
    elif margin < -T:
        margin = -T
    if is_target:
        p = (T - margin) / (2.0 * T)
    else:
        p = (T + margin) / (2.0 * T)

    max_state = 2 * n_states
    log_q = np.log1p(-1.0 / s)
    for j in range(n):
        if rng.random() >= p:
            continue
        positive = j % 2 == 0
        fired = outputs[j] == 1
        if positive == is_target:
            _type_i(ta[j], literals, fired, log_q, max_state, rng)
            if fired:
                weights[j] += 1
        elif fired:
            _type_ii(ta[j], literals, n_states)
            if weights[j] > 1:
                weights[j] -= 1


@numba.njit(nogil=True, cache=True)
def train_samples(ta, weights, literals, labels, order, T, s, n_states, rng):
    """One pass over ``order``: target-class update plus one random other class."""
    n_classes = ta.shape[0]
    outputs = np.empty(ta.shape[1], dtype=np.int8)
    for idx in order:
        target = labels[idx]
        lits = literals[idx]
        update_bank(ta[target], weights[target], lits, True, T, s, n_states, outputs, rng)
        if n_classes > 1:
            other = rng.integers(0, n_classes - 1)
            if other >= target:
                other += 1
            update_bank(ta[other], weights[other], lits, False, T, s, n_states, outputs, rng)
