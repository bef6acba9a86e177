import itertools

import numpy as np
import pytest
from scipy.stats import norm

from commitkit import query as Q
from commitkit.breakpoints import EvaluatedCommitmentSet, centralized_optimal_commitment
from commitkit.domains.rng import streams
from commitkit.provider import Commitment
from oracles import brute_force_best_subset, definitional_eus, partition_best_eus


def fake_set(seed, N=6, n=9):
    rng = np.random.default_rng(seed)
    cs = [Commitment(1 + j // 3, (j % 3) / 4) for j in range(n)]
    return EvaluatedCommitmentSet(cs, rng.normal(size=n), rng.normal(size=(N, n)))


def spread_belief(seed, N):
    w = np.random.default_rng(seed + 1000).random(N) + 0.05
    return Q.Belief(w / w.sum())


def test_eu_arithmetic():
    cs = [Commitment(1, 0.0)]
    ev = EvaluatedCommitmentSet(cs, [1.0], [[2.0], [4.0]])
    assert Q.expected_utility(cs[0], Q.Belief.uniform(2), ev) == pytest.approx(4.0)


def test_eus_arithmetic():
    cs = [Commitment(1, 0.0), Commitment(2, 0.0)]
    ev = EvaluatedCommitmentSet(cs, [0.0, 0.0], [[3.0, 1.0], [0.0, 4.0]])
    assert Q.eus(cs, Q.Belief.uniform(2), ev) == pytest.approx(3.5)
    assert Q.eus(cs[:1], Q.Belief.uniform(2), ev) == pytest.approx(
        Q.expected_utility(cs[0], Q.Belief.uniform(2), ev))


@pytest.mark.parametrize("seed", range(10))
def test_eus_matches_definitional_form(seed):
    ev = fake_set(seed)
    b = spread_belief(seed, 6)
    for picks in itertools.combinations(range(9), 3):
        q = [ev.commitments[j] for j in picks]
        assert Q.eus(q, b, ev) == pytest.approx(
            definitional_eus(b.weights, ev.joint, list(picks)), abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_exhaustive_matches_brute_force(seed):
    ev = fake_set(seed)
    b = spread_belief(seed, 6)
    for k in (1, 2, 3, 4):
        want = brute_force_best_subset(b.weights, ev.joint, k)[0]
        assert partition_best_eus(b.weights, ev.joint, k) == pytest.approx(want, abs=1e-12)
        for method in ("subset", "partition"):
            q = Q.exhaustive_query(b, ev.commitments, k, ev, method=method)
            assert len(q) == k
            assert Q.eus(q, b, ev) == pytest.approx(want, abs=1e-12)


def test_exhaustive_edges():
    ev = fake_set(1)
    b = Q.Belief.uniform(6)
    assert set(Q.exhaustive_query(b, ev.commitments, 9, ev)) == set(ev.commitments)
    assert list(Q.exhaustive_query(b, ev.commitments, 1, ev)) == [
        Q.optimal_commitment_under_belief(b, ev.commitments, ev)]
    with pytest.raises(Q.BudgetExceeded):
        Q.exhaustive_query(b, ev.commitments, 4, ev, budget=10, method="subset")


@pytest.mark.parametrize("seed", range(20))
def test_greedy_bound(seed):
    ev = fake_set(seed, N=8, n=12)
    b = spread_belief(seed, 8)
    for k in (2, 3):
        g = Q.eus(Q.greedy_query(b, ev.commitments, k, ev), b, ev)
        x = Q.eus(Q.exhaustive_query(b, ev.commitments, k, ev), b, ev)
        assert g >= (1 - ((k - 1) / k) ** k) * x - 1e-12 or x <= 0
        assert g <= x + 1e-12


def test_greedy_edges():
    ev = fake_set(3)
    b = Q.Belief.uniform(6)
    assert list(Q.greedy_query(b, ev.commitments, 1, ev)) == [
        Q.optimal_commitment_under_belief(b, ev.commitments, ev)]
    q = Q.greedy_query(b, ev.commitments, 20, ev)
    assert Q.eus(q, b, ev) == pytest.approx(Q.eus_upper_bound(b, ev))


@pytest.mark.parametrize("seed", range(5))
def test_submodular_and_monotone(seed):
    ev = fake_set(seed)
    b = spread_belief(seed, 6)
    rng = np.random.default_rng(seed)
    cs = ev.commitments
    for _ in range(200):
        perm = rng.permutation(len(cs))
        a, big = sorted(rng.integers(1, 7, 2))
        small, large, c = perm[:a], perm[:big], perm[8]
        q, q2 = [cs[j] for j in small], [cs[j] for j in large]
        gain = Q.eus(q + [cs[c]], b, ev) - Q.eus(q, b, ev)
        gain2 = Q.eus(q2 + [cs[c]], b, ev) - Q.eus(q2, b, ev)
        assert gain >= gain2 - 1e-9
        assert Q.eus(q2, b, ev) >= Q.eus(q, b, ev) - 1e-12


def test_posterior_filters_selectors():
    ev = fake_set(4, N=10)
    b = Q.Belief.uniform(10)
    q = Q.greedy_query(b, ev.commitments, 3, ev)
    J = ev.joint[:, ev.indices(list(q))]
    for r in range(3):
        keep = [i for i in range(10) if int(np.argmax(J[i])) == r]
        if not keep:
            with pytest.raises(Q.InconsistentResponse):
                Q.posterior(b, q, r, ev)
            continue
        post = Q.posterior(b, q, r, ev)
        want = np.zeros(10)
        want[keep] = 1 / len(keep)
        assert np.allclose(post.weights, want, atol=1e-15)


def test_posterior_point_mass_and_single_candidate():
    cs = [Commitment(1, 0.0), Commitment(2, 0.0)]
    ev = EvaluatedCommitmentSet(cs, [0.0, 0.0], [[3.0, 1.0], [0.0, 4.0]])
    assert Q.posterior(Q.Belief.uniform(2), cs, 1, ev).weights.tolist() == [0.0, 1.0]
    one = EvaluatedCommitmentSet(cs, [0.0, 0.0], [[3.0, 1.0]])
    assert Q.posterior(Q.Belief.uniform(1), cs, 0, one).weights.tolist() == [1.0]


def test_responder_ties_go_to_first():
    assert Q.select_index([[1.0, 1.0, 0.5]]).tolist() == [0]


def test_optimal_under_point_mass():
    ev = fake_set(7)
    b = Q.Belief(np.eye(6)[2])
    best = Q.optimal_commitment_under_belief(b, ev.commitments, ev)
    assert ev.index(best) == int(np.argmax(ev.joint[2]))


def test_random_query_seeded():
    ev = fake_set(0)
    b = Q.Belief.uniform(6)
    a = Q.random_query(b, ev.commitments, 4, 17)
    assert a == Q.random_query(b, ev.commitments, 4, 17) and len(a) == 4


def test_random_query_below_greedy_on_average():
    g = r = 0.0
    for seed in range(50):
        ev = fake_set(seed)
        b = Q.Belief.uniform(6)
        g += Q.eus(Q.greedy_query(b, ev.commitments, 2, ev), b, ev)
        r += Q.eus(Q.random_query(b, ev.commitments, 2, seed), b, ev)
    assert r <= g


def test_priors():
    assert np.allclose(Q.make_prior("uniform", 7).weights, 1 / 7)
    assert Q.make_prior("random", 9, 3).weights.sum() == pytest.approx(1.0)
    # independent reimplementation of the density-ratio prior
    x = streams(5, ("prior",))["prior"].uniform(-3, 3, 12)
    w = np.exp(-x ** 2 / 2)
    assert np.allclose(Q.make_prior("gaussian", 12, 5).weights, w / w.sum(), atol=1e-15)
    with pytest.raises(ValueError):
        Q.make_prior("beta", 3)


def test_belief_and_query_validation():
    with pytest.raises(ValueError):
        Q.Belief(np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        Q.Query((Commitment(1, 0.0), Commitment(1, 0.0)))


def test_multi_round_support_shrinks():
    ev = fake_set(9, N=10, n=12)
    b = Q.Belief.uniform(10)
    for true in range(10):
        q0, q1, mu0, mu1 = Q.multi_round(b, 2, 3, ev.commitments, ev, true)
        assert mu1.weights[true] > 0
        assert len(mu1.support) <= len(mu0.support)
        assert Q.eus(q1, mu1, ev) >= Q.eus(q0, mu1, ev) - 1e-12


def test_real_instance_consistency():
    from commitkit.breakpoints import build_commitment_set, evaluate_commitments
    from commitkit.domains import gen_synthetic_provider, gen_walk_recipient
    from commitkit.recipient import value_curve
    from commitkit.provider import commitment_value

    provider = gen_synthetic_provider(2, horizon=6)
    recips = [gen_walk_recipient(s, horizon=6) for s in range(3)]
    C = build_commitment_set(provider, "breakpoints").commitments()
    ev = evaluate_commitments(provider, recips, C)
    b = Q.Belief.uniform(3)
    c = C[len(C) // 2]
    direct = np.mean([commitment_value(provider, c)[0] + value_curve(r, c.T, [c.p])[0]
                      for r in recips])
    assert Q.expected_utility(c, b, ev) == pytest.approx(direct, abs=1e-9)
    opt = [centralized_optimal_commitment(provider, r)[1] for r in recips]
    assert Q.eus_upper_bound(b, ev) == pytest.approx(np.mean(opt), abs=1e-9)
