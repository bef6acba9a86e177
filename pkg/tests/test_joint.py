import numpy as np
import pytest

from commitkit import mdp as M
from commitkit import recipient as R
from commitkit.breakpoints import build_commitment_set, evaluate_commitments
from commitkit.domains import gen_synthetic_provider, gen_walk_recipient, joint as J
from commitkit.mdp import from_dense
from commitkit.provider import Commitment, ProviderModel, commitment_value, unconstrained_value

H = 6


@pytest.mark.parametrize("seed", range(3))
def test_explicit_and_factored_joint_agree(seed):
    provider = gen_synthetic_provider(seed, horizon=H)
    r = gen_walk_recipient(seed, horizon=H)
    explicit = M.solve(J.build_joint_mmdp(provider, r))[0][0]
    m = J.build_joint_mmdp(provider, r)
    assert explicit[m.initial_state] == pytest.approx(J.joint_optimal_value(provider, r), abs=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_centralization_dominates(seed):
    provider = gen_synthetic_provider(10 + seed, horizon=H)
    r = gen_walk_recipient(10 + seed, horizon=H)
    top = J.joint_optimal_value(provider, r)
    C = build_commitment_set(provider, "breakpoints").commitments()
    ev = evaluate_commitments(provider, [r], C)
    assert ev.joint.max() <= top + 1e-9
    for c in C[:: max(1, len(C) // 15)]:
        assert J.evaluate_joint_execution(provider, r, c) <= top + 1e-9
    assert J.random_policy_value(provider, r) <= top + 1e-9
    assert J.null_value(provider, r) <= top + 1e-9


def test_null_commitment_is_sum_of_local_optima():
    provider = gen_synthetic_provider(2, horizon=H)
    r = gen_walk_recipient(2, horizon=H)
    got = J.evaluate_joint_execution(provider, r, Commitment(H, 0.0))
    want = unconstrained_value(provider) + R.baseline_value(r)
    # the recipient plans for u minus; a lucky flip can only help it
    assert got >= want - 1e-9
    assert J.null_value(provider, r) == pytest.approx(want)


def deterministic_flip_provider(T=3, horizon=H):
    """One path state per stage; the last action flips u at stage T-1."""
    P, Rw = [], []
    for h in range(horizon):
        Ph = np.zeros((2, 2, 2))
        Ph[0, :, 0] = 1.0
        if h == T - 1:
            Ph[0, 1] = [0.0, 1.0]
        Ph[1, :, 1] = 1.0
        P.append(Ph)
        Rw.append(np.array([[0.5, 0.0], [0.0, 0.0]]))
    mdp = from_dense(P, Rw)
    return ProviderModel(mdp, {0: [np.array([False, True])] * (horizon + 1)})


def test_exact_model_when_provider_is_deterministic():
    provider = deterministic_flip_provider()
    r = gen_walk_recipient(4, horizon=H)
    c = Commitment(3, 1.0)
    vp, _ = commitment_value(provider, c)
    vr, _ = R.commitment_value(r, c)
    assert J.evaluate_joint_execution(provider, r, c) == pytest.approx(vp + vr, abs=1e-9)


def test_decoupled_recipient_gives_sum_of_optima():
    provider = gen_synthetic_provider(7, horizon=H)
    r = gen_walk_recipient(7, horizon=H)
    flat = R.RecipientModel(np.stack([r.transitions[0]] * 2), np.stack([r.rewards[0]] * 2), H,
                            r.initial_local)
    want = unconstrained_value(provider) + R.baseline_value(flat)
    assert J.joint_optimal_value(provider, flat) == pytest.approx(want, abs=1e-9)


def test_flip_cdf_and_influence():
    provider = deterministic_flip_provider()
    _, pol = commitment_value(provider, Commitment(3, 1.0))
    cdf = J.flip_cdf(provider, pol, 0)
    assert cdf.tolist() == [0, 0, 0, 1, 1, 1, 1]
    assert J.true_influence(provider, pol, 0).hazards[2] == 1.0


def test_budget():
    provider = gen_synthetic_provider(1, horizon=H)
    r = gen_walk_recipient(1, horizon=H)
    with pytest.raises(J.BudgetExceeded):
        J.joint_optimal_value(provider, r, budget=10)


def test_random_commitment_is_feasible():
    provider = gen_synthetic_provider(3, horizon=H)
    rng = np.random.default_rng(0)
    for _ in range(20):
        c = J.random_commitment(provider, 0, rng)
        commitment_value(provider, c)
