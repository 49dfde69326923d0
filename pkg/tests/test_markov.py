import warnings

import numpy as np
import pytest

from rebindkit.errors import NonUniqueStationary, NotGeneratorLike, ValidationError
from rebindkit.markov import (
    RateMatrix,
    RenormalizationWarning,
    StationaryDistribution,
    TransitionMatrix,
    detailed_balance_part,
    nonreversibility,
    rate_to_transition,
    relative_nonreversibility,
    stationary_distribution,
    transition_to_rate,
    weighted_gram,
    weighted_inner,
)

from conftest import random_generator, random_reversible_generator
from oracles import expm_two_state, stationary_by_power


def test_transition_matrix_validation():
    TransitionMatrix([[0.9, 0.1], [0.2, 0.8]])
    with pytest.raises(ValidationError):
        TransitionMatrix([[0.9, 0.2], [0.2, 0.8]])
    with pytest.raises(ValidationError):
        TransitionMatrix([[1.1, -0.1], [0.2, 0.8]])
    with pytest.raises(ValidationError):
        TransitionMatrix([[0.9, 0.1], [0.2, 0.8]], tau=0.0)
    with pytest.raises(ValidationError):
        TransitionMatrix([[np.nan, 1.0], [0.2, 0.8]])
    with pytest.raises(ValidationError):
        TransitionMatrix([[1.0]])


def test_rate_matrix_validation():
    RateMatrix([[-1.0, 1.0], [2.0, -2.0]])
    with pytest.raises(ValidationError):
        RateMatrix([[-1.0, 1.0], [2.0, -1.0]])
    with pytest.raises(ValidationError):
        RateMatrix([[1.0, -1.0], [2.0, -2.0]])
    with pytest.raises(ValidationError):
        RateMatrix(np.zeros((2, 3)))


def test_entries_are_read_only():
    P = TransitionMatrix([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(ValueError):
        P.entries[0, 0] = 1.0


def test_repaired_diagonal():
    Q, adj = RateMatrix.with_repaired_diagonal([[-1.0001, 1.0], [0.5, -0.5]])
    np.testing.assert_allclose(Q.entries.sum(axis=1), 0.0, atol=1e-15)
    assert adj == pytest.approx(1e-4)


def test_stationary_matches_power_iteration(rng):
    for _ in range(10):
        Q = random_generator(rng, 6)
        P = rate_to_transition(Q, 0.7)
        pi = stationary_distribution(P)
        np.testing.assert_allclose(pi.pi, stationary_by_power(P.entries), atol=1e-10)
        np.testing.assert_allclose(stationary_distribution(RateMatrix(Q)).pi, pi.pi, atol=1e-10)


def test_stationary_two_state_closed_form():
    Q = RateMatrix([[-0.3, 0.3], [0.1, -0.1]])
    np.testing.assert_allclose(stationary_distribution(Q).pi, [0.25, 0.75], atol=1e-14)


def test_stationary_rejects_reducible():
    P = np.eye(3)
    with pytest.raises(NonUniqueStationary):
        stationary_distribution(TransitionMatrix(P))
    block = np.zeros((4, 4))
    block[:2, :2] = [[-1, 1], [1, -1]]
    block[2:, 2:] = [[-1, 1], [1, -1]]
    with pytest.raises(NonUniqueStationary):
        stationary_distribution(RateMatrix(block))


def test_stationary_distribution_type():
    with pytest.raises(ValidationError):
        StationaryDistribution([0.5, 0.6])
    p = StationaryDistribution([0.25, 0.75])
    np.testing.assert_array_equal(np.asarray(p), [0.25, 0.75])
    np.testing.assert_array_equal(p.D, np.diag([0.25, 0.75]))
    assert len(p) == 2


def test_nonreversibility_zero_for_detailed_balance(rng):
    Q, pi = random_reversible_generator(rng, 7)
    np.testing.assert_allclose(stationary_distribution(RateMatrix(Q)).pi, pi, atol=1e-12)
    assert nonreversibility(Q, pi) < 1e-13
    assert relative_nonreversibility(Q, pi) < 1e-13


def test_nonreversibility_cycle():
    # uniform 3-cycle: pi uniform, all flux goes one way
    Q = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])
    pi = np.full(3, 1 / 3)
    assert nonreversibility(Q, pi) == pytest.approx(2.0)
    assert relative_nonreversibility(Q, pi) == pytest.approx(1.0)
    R = detailed_balance_part(Q, pi)
    assert nonreversibility(R, pi) < 1e-15
    np.testing.assert_allclose(R.sum(axis=1), 0.0, atol=1e-15)
    np.testing.assert_allclose(pi @ R, 0.0, atol=1e-15)


def test_detailed_balance_part_keeps_pi(rng):
    Q = random_generator(rng, 5)
    pi = stationary_distribution(RateMatrix(Q)).pi
    R = detailed_balance_part(Q, pi)
    np.testing.assert_allclose(pi @ R, 0.0, atol=1e-14)
    np.testing.assert_allclose(R.sum(axis=1), 0.0, atol=1e-14)
    assert nonreversibility(R, pi) < 1e-14


def test_expm_two_state_oracle():
    for a, b, t in [(0.3, 0.1, 1.0), (2.0, 5.0, 0.05), (1e-3, 2e-3, 10.0)]:
        P = rate_to_transition([[-a, a], [b, -b]], t)
        np.testing.assert_allclose(P.entries, expm_two_state(a, b, t), atol=1e-14)


def test_rate_transition_round_trip(rng):
    for _ in range(20):
        Q = random_generator(rng, 4)
        P = rate_to_transition(Q, 0.5)
        back = transition_to_rate(P)
        np.testing.assert_allclose(back.entries, Q, atol=1e-10)


def test_transition_to_rate_rejects_non_embeddable():
    # the swap has eigenvalue -1: no real principal logarithm
    from rebindkit.errors import NoPrincipalLog

    with pytest.raises(NoPrincipalLog):
        transition_to_rate(TransitionMatrix([[0.0, 1.0], [1.0, 0.0]]))
    # real log exists but has large negative off-diagonal entries
    P = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
    with pytest.raises(NotGeneratorLike):
        transition_to_rate(P)


def test_rate_to_transition_rows_sum_to_one(rng):
    Q = random_generator(rng, 8)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RenormalizationWarning)
        P = rate_to_transition(Q, 3.0)
    np.testing.assert_allclose(P.entries.sum(axis=1), 1.0, atol=1e-12)
    assert P.tau == 3.0


def test_weighted_products():
    pi = np.array([0.2, 0.3, 0.5])
    u = np.array([1.0, 2.0, 3.0])
    v = np.array([1.0, -1.0, 1.0])
    assert weighted_inner(u, v, pi) == pytest.approx(0.2 - 0.6 + 1.5)
    G = weighted_gram(np.column_stack([u, v]), np.column_stack([u, v]), pi)
    np.testing.assert_allclose(G, G.T)
    assert G[0, 1] == pytest.approx(weighted_inner(u, v, pi))
    with pytest.raises(ValidationError):
        weighted_inner(u, v[:2], pi)
