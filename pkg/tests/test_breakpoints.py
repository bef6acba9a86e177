import numpy as np
import pytest

from commitkit import breakpoints as B
from commitkit import recipient as R
from commitkit.domains import gen_walk_recipient
from commitkit.mdp import from_dense
from commitkit.provider import (Commitment, ProviderModel, commitment_lp, commitment_value,
                                max_feasible_probability, unconstrained_value)
from conftest import small_provider
from oracles import envelope_kinks, envelope_vertices, policy_points


def one_kink_provider(r_mid=0.5, r_sure=0.0):
    """Three states; a gamble reaching plus w.p. 0.6 between staying and a sure flip.

    The value has a single kink at p* = 0.6.
    """
    P0 = np.zeros((1, 3, 3))
    P0[0, 0, 1] = 1.0
    P0[0, 1, 2] = 0.6
    P0[0, 1, 1] = 0.4
    P0[0, 2, 2] = 1.0
    R0 = np.array([[1.0, r_mid, r_sure]])
    mdp = from_dense([P0], [R0])
    return ProviderModel(mdp, {0: [np.array([False]), np.array([False, False, True])]})


def grid_kinks(model, T, n=1024):
    grid = np.linspace(0, max_feasible_probability(model, T), n + 1)
    slope = np.diff(commitment_lp(model, T).values(grid)) / np.diff(grid)
    return grid[1:-1][np.abs(np.diff(slope)) > 1e-6]


def test_known_kink_within_min_width():
    # slope drops from -1/30 to -7.45 at 0.6: sharp enough that the linearity
    # test cannot stop the search before the interval is min_width wide
    model = one_kink_provider(r_mid=0.98, r_sure=-2.0)
    pts = B.find_breakpoints(model, 1)
    assert pts[0] == 0.0 and pts[-1] == pytest.approx(1.0)
    kinks = grid_kinks(model, 1)
    assert kinks.size and np.all(np.abs(kinks - 0.6) <= 1 / 1024)
    assert np.min(np.abs(pts - 0.6)) <= 1.0 / 2 ** 20


def test_linear_value_gives_two_points():
    P0 = np.zeros((1, 2, 2))
    P0[0, 0] = [0.7, 0.3]
    P0[0, 1] = [0.2, 0.8]
    mdp = from_dense([P0], [np.zeros((1, 2))])
    model = ProviderModel(mdp, {0: [np.array([False]), np.array([False, True])]})
    assert B.find_breakpoints(model, 1).tolist() == [0.0, 0.8]


def test_unreachable_plus_gives_zero_only():
    P0 = np.zeros((1, 1, 2))
    P0[0, 0, 0] = 1.0
    mdp = from_dense([P0], [np.zeros((1, 1))])
    model = ProviderModel(mdp, {0: [np.array([False]), np.array([False, True])]})
    assert B.find_breakpoints(model, 1).tolist() == [0.0]


def chord_error_bound(lp, pts, tol, n=4097):
    """Worst gap between the value curve and its interpolant, and the bound implied by tol.

    The value is concave in p, so the midpoint gap is at least half the worst gap
    on an interval, which gives the factor of two.
    """
    vals = lp.values(pts)
    grid = np.linspace(pts[0], pts[-1], n)
    gap = lp.values(grid) - np.interp(grid, pts, vals)
    seg = np.clip(np.searchsorted(pts, grid, side="right") - 1, 0, len(pts) - 2)
    bound = 2 * tol * np.maximum(1.0, np.abs(vals[seg])) + 1e-9
    return gap, bound


def test_known_kink_is_bracketed():
    model = one_kink_provider()
    pts = B.find_breakpoints(model, 1)
    assert pts[0] == 0.0 and pts[-1] == pytest.approx(1.0)
    i = np.searchsorted(pts, 0.6)
    assert pts[i] - pts[i - 1] < 1e-5
    gap, bound = chord_error_bound(commitment_lp(model, 1), pts, 1e-6)
    assert np.all(gap <= bound)


@pytest.mark.parametrize("seed", range(4))
def test_breakpoints_bound_interpolation_error(seed):
    model = small_provider(seed, n_states=5, n_actions=3, horizon=6)
    for T in (2, 4, 6):
        pts = B.find_breakpoints(model, T)
        gap, bound = chord_error_bound(commitment_lp(model, T), pts, 1e-6)
        assert gap.min() >= -1e-9
        assert np.all(gap <= bound)
        # every true kink sits inside a short interval or on a breakpoint
        for k in envelope_kinks(envelope_vertices(model, T)):
            i = min(max(np.searchsorted(pts, k), 1), len(pts) - 1)
            assert pts[i] - pts[i - 1] < 0.05 or np.min(np.abs(pts - k)) < 1e-9


@pytest.mark.parametrize("seed", range(3))
def test_interpolation_between_breakpoints(seed):
    model = small_provider(seed, n_states=6, n_actions=3, horizon=6)
    T = 4
    vals = {}
    pts = B.find_breakpoints(model, T, values=vals)
    lp = commitment_lp(model, T)
    grid = np.linspace(0, max_feasible_probability(model, T), 513)
    recon = np.interp(grid, pts, [vals[p] if p in vals else lp.solve(p)[0] for p in pts])
    truth = lp.values(grid)
    assert np.allclose(recon, truth, rtol=1e-6, atol=1e-6)


def test_monotone_refinement():
    model = small_provider(3, n_states=6, n_actions=3, horizon=8)
    for T in (3, 8):
        fine = set(B.find_breakpoints(model, T, tol=1e-6).tolist())
        coarse = set(B.find_breakpoints(model, T, tol=1e-3).tolist())
        assert coarse <= fine


def test_all_breakpoints_feasible():
    model = small_provider(8, n_states=6, n_actions=3, horizon=8)
    for T in range(1, 9):
        assert B.find_breakpoints(model, T).max() <= max_feasible_probability(model, T) + 1e-9


def test_even_points():
    assert np.allclose(B.even_points(0.74, 10), np.arange(8) / 10)


def test_dp_matches_full_enumeration():
    model = small_provider(0, n_states=3, n_actions=2, horizon=3)
    for T in (1, 2, 3):
        masses = np.sort(policy_points(model, T)[:, 0])
        expect = B.group_points(masses, 10)
        got, truncated = B.dp_points(model, T, 10)
        assert not truncated
        assert np.allclose(got, expect, atol=1e-12)


def test_dp_cap_raises_with_partial():
    model = small_provider(1, n_states=6, n_actions=3, horizon=8)
    with pytest.raises(B.CapExceeded) as err:
        B.build_commitment_set(model, "dp(10)", cap=50)
    assert err.value.partial.truncated


def test_parse_kind():
    assert B.parse_kind("even(7)") == ("even", {"n": 7})
    assert B.parse_kind("breakpoints(tol=1e-4)")[1]["tol"] == 1e-4
    with pytest.raises(ValueError):
        B.parse_kind("magic(3)")


def test_discretization_json_round_trip():
    model = small_provider(2)
    d = B.build_commitment_set(model, "even(4)")
    again = B.Discretization.from_dict(d.to_dict())
    assert again.commitments() == d.commitments()


def test_centralized_optimum_matches_dense_grid():
    model = small_provider(4, n_states=6, n_actions=3, horizon=8)
    r = gen_walk_recipient(4, horizon=8)
    c, v = B.centralized_optimal_commitment(model, r)
    grid = B.even_grid_commitments(model, 512)
    ev = B.evaluate_commitments(model, [r], grid)
    assert v >= ev.joint.max() - 1e-6 * max(1, abs(v))


def test_indifferent_recipient_gets_unconstrained_commitment():
    model = small_provider(6)
    r = gen_walk_recipient(6, horizon=4)
    flat = type(r)(np.stack([r.transitions[0]] * 2), np.stack([r.rewards[0]] * 2), 4,
                   r.initial_local)
    c, v = B.centralized_optimal_commitment(model, flat)
    base = R.value_curve(flat, 1, [0.0])[0]
    assert v == pytest.approx(unconstrained_value(model) + base, abs=1e-9)
    assert commitment_value(model, c)[0] == pytest.approx(unconstrained_value(model), abs=1e-9)


def test_evaluated_set_lookup():
    model = small_provider(2)
    cs = [Commitment(1, 0.0), Commitment(2, 0.0)]
    ev = B.evaluate_commitments(model, [gen_walk_recipient(0, horizon=4)], cs)
    assert ev.index(cs[1]) == 1
    with pytest.raises(KeyError):
        ev.index(Commitment(3, 0.0))
