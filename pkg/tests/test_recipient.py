import numpy as np
import pytest

from commitkit import mdp as M
from commitkit import recipient as R
from commitkit.provider import Commitment
from commitkit.domains.walk import gen_walk_recipient, walk_recipient
from conftest import small_recipient


@pytest.mark.parametrize("seed", range(5))
def test_value_curve_matches_full_solve(seed):
    r = small_recipient(seed, horizon=5)
    for T in (1, 3, 5):
        ps = np.linspace(0, 1, 9)
        batch = R.value_curve(r, T, ps)
        single = [R.commitment_value(r, Commitment(T, float(p)))[0] for p in ps]
        assert np.allclose(batch, single, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_decomposition_identity(seed):
    r = gen_walk_recipient(seed)
    for T in (2, 7, 15):
        for p in (0.0, 0.3, 1.0):
            c = Commitment(T, p)
            v, pol = R.commitment_value(r, c)
            v1, v0 = R.conditional_values(r, c, pol)
            assert v == pytest.approx(p * v1 + (1 - p) * v0, abs=1e-9)


def test_influence_cdf_round_trip():
    cdf = np.array([0.0, 0.1, 0.1, 0.5, 0.9, 1.0])
    infl = R.Influence.from_cdf(cdf)
    assert np.allclose(infl.flip_cdf(), cdf, atol=1e-12)


def test_single_branch_flips_only_at_T():
    infl = R.single_branch_influence(Commitment(3, 0.4), 5)
    assert infl.hazards == (0.0, 0.0, 0.4, 0.0, 0.0)
    assert infl.flip_cdf()[3] == pytest.approx(0.4)


def test_build_approx_model_keeps_u_permanent():
    r = small_recipient(1)
    m = R.build_approx_model(r, R.single_branch_influence(Commitment(2, 0.7), r.horizon))
    L = r.n_local
    for h in range(m.horizon):
        P = m.dense_transitions(h)
        assert np.all(P[L:, :, :L] == 0)


def test_walk_bump_and_gate():
    r = walk_recipient(1, 5.0)
    assert r.R(0)[R.MINUS, 1, 0] == -11.0
    assert r.P(0)[R.MINUS, 1, 0, 1] == 1.0
    assert r.P(0)[R.PLUS, 1, 0, 0] == 1.0
    assert r.R(0)[R.PLUS, 1, 0] == pytest.approx(-1.0 + 5.0)


def test_walk_open_gate_goes_left_when_worth_it():
    r = walk_recipient(1, 3.0)
    _, pol = M.solve(R.local_mdp(r, R.PLUS))
    assert pol[0][1].argmax() == 0


def test_assumption_check():
    for seed in range(10):
        assert R.check_assumption_u(gen_walk_recipient(seed)).holds
    r = walk_recipient(2, 5.0)
    flipped = R.RecipientModel(r.transitions[::-1], r.rewards[::-1], r.horizon, r.initial_local)
    chk = R.check_assumption_u(flipped)
    assert not chk.holds and chk.worst_state is not None


def test_evaluate_under_true_influence_equals_single_branch_when_exact():
    r = gen_walk_recipient(3)
    c = Commitment(4, 0.6)
    v, pol = R.commitment_value(r, c)
    assert R.evaluate_under(r, pol, R.single_branch_influence(c, r.horizon)) == pytest.approx(v)


def test_json_round_trip():
    r = gen_walk_recipient(9)
    again = R.RecipientModel.from_dict(r.to_dict())
    assert R.value_curve(again, 5, [0.5])[0] == R.value_curve(r, 5, [0.5])[0]
