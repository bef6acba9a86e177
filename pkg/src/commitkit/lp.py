"""Linear programming backends for ``max c @ x  s.t.  A x = b, x >= 0``.

Two interchangeable solvers:

* :func:`tableau_simplex` -- dense two-phase tableau simplex with Bland's
  pivoting rule. Exact up to floating point, deterministic, and slow; meant for
  small systems and for cross-checking.
* :class:`HighsLp` -- a persistent HiGHS model whose equality right-hand side
  can be changed between solves, so a sweep over commitment probabilities
  re-solves from the previous basis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse


class LpInfeasible(ValueError):
    pass


class LpUnbounded(ValueError):
    pass


@dataclass
class LpResult:
    x: np.ndarray
    value: float
    iterations: int = 0


def _pivot(tab: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    colv = tab[:, col].copy()
    colv[row] = 0.0
    tab -= np.outer(colv, tab[row])


def _run_bland(tab: np.ndarray, basis: list[int], n_cols: int, tol: float,
               max_iter: int) -> int:
    """Maximise the objective stored (negated) in the last tableau row."""
    m = len(basis)
    it = 0
    while True:
        obj = tab[-1, :n_cols]
        entering = np.flatnonzero(obj < -tol)
        if entering.size == 0:
            return it
        j = int(entering[0])
        colv = tab[:m, j]
        pos = colv > tol
        if not pos.any():
            raise LpUnbounded("objective unbounded")
        ratios = np.full(m, np.inf)
        ratios[pos] = tab[:m, -1][pos] / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        i = int(min(ties, key=lambda r: basis[r]))
        _pivot(tab, i, j)
        basis[i] = j
        it += 1
        if it > max_iter:
            raise RuntimeError("simplex iteration limit reached")


def tableau_simplex(c, A, b, tol: float = 1e-11, max_iter: int = 100_000) -> LpResult:
    """Two-phase dense simplex with Bland's rule for ``max c x, A x = b, x >= 0``."""
    A = A.toarray() if sparse.issparse(A) else np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.asarray(c, dtype=float)
    m, n = A.shape
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    # phase 1: columns [x | artificials | rhs], objective row = -(sum of artificials)
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[-1, :n] = -A.sum(axis=0)
    tab[-1, -1] = -b.sum()
    basis = list(range(n, n + m))
    it = _run_bland(tab, basis, n + m, tol, max_iter)
    if -tab[-1, -1] > 1e-8 * max(1.0, b.sum()):
        raise LpInfeasible("phase 1 ended with positive artificial mass")

    # drive remaining artificials out of the basis; drop redundant rows
    keep = []
    for i in range(m):
        if basis[i] >= n:
            cand = np.flatnonzero(np.abs(tab[i, :n]) > 1e-9)
            if cand.size == 0:
                continue
            _pivot(tab, i, int(cand[0]))
            basis[i] = int(cand[0])
        keep.append(i)
    tab = np.vstack([tab[keep][:, list(range(n)) + [n + m]], np.zeros((1, n + 1))])
    basis = [basis[i] for i in keep]

    # phase 2 objective row: -(c - c_B B^-1 A)
    tab[-1, :n] = -c
    tab[-1, -1] = 0.0
    for i, j in enumerate(basis):
        tab[-1] -= tab[-1, j] * tab[i]
    it += _run_bland(tab, basis, n, tol, max_iter)
    x = np.zeros(n)
    x[basis] = tab[:-1, -1]
    x[np.abs(x) < 1e-14] = 0.0
    return LpResult(x=x, value=float(c @ x), iterations=it)


class HighsLp:
    """Persistent HiGHS model ``max c x`` with equality rows and ``x >= 0``."""

    def __init__(self, c, A, b, feas_tol: float = 1e-10):
        import highspy

        A = sparse.csc_matrix(A)
        m, n = A.shape
        self._h = h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("primal_feasibility_tolerance", feas_tol)
        h.setOptionValue("dual_feasibility_tolerance", feas_tol)
        h.setOptionValue("random_seed", 0)
        lp = highspy.HighsLp()
        lp.num_col_ = n
        lp.num_row_ = m
        lp.col_cost_ = -np.asarray(c, dtype=float)
        lp.col_lower_ = np.zeros(n)
        lp.col_upper_ = np.full(n, highspy.kHighsInf)
        b = np.asarray(b, dtype=float)
        lp.row_lower_ = b
        lp.row_upper_ = b
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        h.passModel(lp)
        self._ok = highspy.HighsModelStatus.kOptimal
        self._infeasible = highspy.HighsModelStatus.kInfeasible
        self.n_cols = n
        self.n_rows = m

    def set_rhs(self, row: int, value: float) -> None:
        self._h.changeRowBounds(row, value, value)

    def set_upper(self, col: int, value: float) -> None:
        import highspy

        self._h.changeColBounds(col, 0.0, highspy.kHighsInf if value is None else value)

    def solve(self, warm: bool = True, with_x: bool = True) -> LpResult:
        h = self._h
        if not warm:
            h.clearSolver()
        h.run()
        status = h.getModelStatus()
        if warm and status not in (self._ok, self._infeasible):
            # a stale basis occasionally stalls the simplex; one cold retry
            h.clearSolver()
            h.run()
            status = h.getModelStatus()
        if status == self._infeasible:
            raise LpInfeasible("HiGHS reports infeasible")
        if status != self._ok:
            raise RuntimeError(f"HiGHS status {h.modelStatusToString(status)}")
        x = np.array(h.getSolution().col_value) if with_x else None
        return LpResult(x=x, value=-h.getInfo().objective_function_value,
                        iterations=int(h.getInfo().simplex_iteration_count))
