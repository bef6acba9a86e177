import numpy as np
import pytest
from scipy.optimize import linprog

from commitkit.lp import HighsLp, LpInfeasible, LpUnbounded, tableau_simplex


def random_lp(seed, m=4, n=7):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    x0 = rng.random(n)
    b = A @ x0  # feasible by construction
    c = rng.normal(size=n)
    return c, A, b


@pytest.mark.parametrize("seed", range(15))
def test_tableau_matches_scipy(seed):
    c, A, b = random_lp(seed)
    ref = linprog(-c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if ref.status == 3:
        with pytest.raises(LpUnbounded):
            tableau_simplex(c, A, b)
        return
    res = tableau_simplex(c, A, b)
    assert res.value == pytest.approx(-ref.fun, rel=1e-8, abs=1e-9)
    assert np.abs(A @ res.x - b).max() < 1e-8
    assert res.x.min() > -1e-12


def test_redundant_rows_are_dropped():
    A = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
    b = np.array([1.0, 2.0, 1.0])
    res = tableau_simplex(np.array([1.0, 0.0, 2.0]), A, b)
    assert res.value == pytest.approx(3.0)


def test_infeasible_detected():
    A = np.array([[1.0, 1.0]])
    with pytest.raises(LpInfeasible):
        tableau_simplex(np.ones(2), A, np.array([-1.0]))


def test_highs_warm_start_matches_cold():
    c, A, b = random_lp(3, 3, 6)
    A = np.vstack([A, np.ones(6)])
    lp = HighsLp(c, A, np.append(b, 10.0))
    vals = []
    for rhs in (10.0, 12.0, 15.0):
        lp.set_rhs(A.shape[0] - 1, rhs)
        warm = lp.solve(warm=True).value
        cold = lp.solve(warm=False).value
        vals.append(warm)
        assert warm == pytest.approx(cold, abs=1e-9)
