import numpy as np
import pytest

from dpnsim.exact import (
    BeliefState,
    ImpossibleEvidenceError,
    exact_filter,
    exact_filter_step,
    exact_marginal,
    exact_marginals,
    exact_prior,
)
from dpnsim.experiments import reference_network
from dpnsim.network import EVIDENCE, PREV, SAME, STATE, DpnModel, Variable, generate_truth_and_evidence, make_cpt, random_model
from dpnsim.seeding import make_rng

from oracles import unrolled_marginals


def single(prior, sensor, move):
    k, m = len(prior), len(sensor[0])
    cards = [k, m]
    variables = (Variable(0, "X", STATE, k), Variable(1, "E", EVIDENCE, m))
    return DpnModel(
        variables,
        (make_cpt(0, [], cards, prior), make_cpt(1, [(0, SAME)], cards, sensor)),
        (make_cpt(0, [(0, PREV)], cards, move), make_cpt(1, [(0, SAME)], cards, sensor)),
    )


def ev(value):
    return np.array([-1, value])


def test_uniform_uninformative():
    m = single([1 / 3] * 3, [[0.5, 0.5]] * 3, np.eye(3))
    np.testing.assert_allclose(exact_prior(m, ev(1)).probabilities, [1 / 3] * 3)


def test_deterministic_sensor_prior():
    m = single([0.2, 0.5, 0.3], np.eye(3), np.full((3, 3), 1 / 3))
    np.testing.assert_allclose(exact_prior(m, ev(2)).probabilities, [0, 0, 1])


def test_r1_prior_by_hand():
    # uniform prior times sensor column for E = 0; state 3 cannot emit 0
    b = exact_prior(reference_network(), ev(0))
    np.testing.assert_allclose(b.probabilities, [0.6, 0.2, 0.2, 0.0], atol=1e-15)


def test_identity_transition_fixed_point():
    m = single([0.1, 0.9], [[0.5, 0.5], [0.5, 0.5]], np.eye(2))
    b = BeliefState(np.array([0.3, 0.7]), (0,), (2,))
    np.testing.assert_allclose(exact_filter_step(m, b, ev(0)).probabilities, [0.3, 0.7])


def test_deterministic_sensor_step():
    m = single([0.5, 0.5, 0.0], np.eye(3), np.full((3, 3), 1 / 3))
    b = BeliefState(np.array([1.0, 0.0, 0.0]), (0,), (3,))
    np.testing.assert_allclose(exact_filter_step(m, b, ev(2)).probabilities, [0, 0, 1])


def test_r1_three_steps_vs_unrolled():
    m = reference_network()
    evidence = np.array([[-1, 0], [-1, 0], [-1, 2], [-1, 3]])
    got = exact_marginals(m, evidence)
    want = unrolled_marginals(m, evidence)
    for g, w in zip(got, want):
        np.testing.assert_allclose(g[0], w[0], atol=1e-10, rtol=0)


@pytest.mark.parametrize("seed", range(8))
def test_random_models_vs_unrolled(seed):
    m = random_model(make_rng(300, seed), n_state=2, n_evidence=2, max_card=2)
    _, evidence = generate_truth_and_evidence(m, 3, make_rng(301, seed))
    for g, w in zip(exact_marginals(m, evidence), unrolled_marginals(m, evidence)):
        for a, b in zip(g, w):
            np.testing.assert_allclose(a, b, atol=1e-10, rtol=0)


def test_normalized_output():
    m = random_model(make_rng(5), n_state=3, n_evidence=2, max_card=3)
    _, evidence = generate_truth_and_evidence(m, 10, make_rng(6))
    for b in exact_filter(m, evidence):
        assert abs(b.probabilities.sum() - 1.0) < 1e-12
        assert np.all(b.probabilities >= 0)


def test_impossible_evidence():
    m = reference_network()
    with pytest.raises(ImpossibleEvidenceError):
        # X = 0 with certainty can never emit E = 1
        exact_prior(single([1.0, 0, 0, 0], m.prior[1].table, m.transition[0].table), ev(1))


def test_marginal_single_variable():
    b = BeliefState(np.array([0.1, 0.2, 0.7]), (0,), (3,))
    np.testing.assert_allclose(exact_marginal(b, 0), [0.1, 0.2, 0.7])


def test_marginal_uniform_2x2():
    b = BeliefState(np.full(4, 0.25), (0, 1), (2, 2))
    np.testing.assert_allclose(exact_marginal(b, 0), [0.5, 0.5])
    np.testing.assert_allclose(exact_marginal(b, 1), [0.5, 0.5])


def test_marginal_product_form():
    a, c = np.array([0.2, 0.8]), np.array([0.1, 0.3, 0.6])
    b = BeliefState(np.outer(a, c).reshape(-1), (0, 2), (2, 3))
    np.testing.assert_allclose(exact_marginal(b, 0), a)
    np.testing.assert_allclose(exact_marginal(b, 2), c)


def test_mixed_radix_lowest_id_most_significant():
    # A (id 0) deterministic 1, B (id 1) deterministic 0 -> index 1 * 3 + 0
    cards = [2, 3, 2]
    variables = (Variable(0, "A", STATE, 2), Variable(1, "B", STATE, 3), Variable(2, "E", EVIDENCE, 2))
    prior = (
        make_cpt(0, [], cards, [0, 1]),
        make_cpt(1, [], cards, [1, 0, 0]),
        make_cpt(2, [(0, SAME)], cards, [[0.5, 0.5], [0.5, 0.5]]),
    )
    m = DpnModel(variables, prior, prior)
    b = exact_prior(m, np.array([-1, -1, 0]))
    assert np.argmax(b.probabilities) == 3


def test_permutation_equivariance():
    rng = make_rng(12)
    k = 3
    prior = rng.dirichlet(np.ones(k))
    sensor = rng.dirichlet(np.ones(2), size=k)
    move = rng.dirichlet(np.ones(k), size=k)
    perm = np.array([2, 0, 1])  # new value j is old value perm[j]
    m = single(prior, sensor, move)
    mp = single(prior[perm], sensor[perm], move[np.ix_(perm, perm)])
    evidence = np.array([[-1, 0], [-1, 1], [-1, 1], [-1, 0]])
    for a, b in zip(exact_marginals(m, evidence), exact_marginals(mp, evidence)):
        np.testing.assert_allclose(a[0][perm], b[0], atol=1e-14)


def test_cap():
    with pytest.raises(ValueError):
        exact_prior(reference_network(), ev(0), cap=3)
