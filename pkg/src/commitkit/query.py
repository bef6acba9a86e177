"""Commitment queries: expected utility, EUS, Bayes filtering and query search.

Everything here works on an :class:`EvaluatedCommitmentSet`, whose row ``i``
holds candidate ``i`` of the belief. Responses follow the noiseless model: the
recipient picks the entry with the largest annotated sum ``v^p + v^r``, the
smallest index on ties.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .breakpoints import EvaluatedCommitmentSet
from .domains.rng import streams
from .provider import Commitment

TIE_TOL = 1e-9
EXHAUSTIVE_BUDGET = 5_000_000


class InconsistentResponse(ValueError):
    """A response that no candidate with positive weight would have given."""


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Belief:
    weights: np.ndarray
    candidates: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).copy()
        if w.ndim != 1 or w.size == 0:
            raise ValueError("a belief needs at least one candidate")
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("belief weights must be non-negative and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.candidates and len(self.candidates) != w.size:
            raise ValueError("one weight per candidate")
        object.__setattr__(self, "candidates", tuple(self.candidates))

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights > 0)

    @classmethod
    def uniform(cls, n: int, candidates=()) -> "Belief":
        return cls(np.full(n, 1.0 / n), candidates)

    def to_dict(self) -> dict:
        ids = [getattr(c, "name", c) for c in self.candidates] or list(range(self.n))
        return {"weights": self.weights.tolist(), "candidates": ids}


@dataclass(frozen=True)
class Query:
    commitments: tuple[Commitment, ...]

    def __post_init__(self):
        cs = tuple(self.commitments)
        if len(set(cs)) != len(cs):
            raise ValueError("query has duplicate commitments")
        object.__setattr__(self, "commitments", cs)

    def __len__(self):
        return len(self.commitments)

    def __iter__(self):
        return iter(self.commitments)

    def to_list(self) -> list:
        return [[c.T, c.p, c.feature_id] for c in self.commitments]


def _check(belief: Belief, ev: EvaluatedCommitmentSet):
    if ev.n_candidates != belief.n:
        raise ValueError(f"evaluation covers {ev.n_candidates} candidates, belief has {belief.n}")


def _first_max(values: np.ndarray, tol: float = TIE_TOL) -> int:
    """Index of the first entry within ``tol`` (relative) of the maximum."""
    best = values.max()
    return int(np.argmax(values >= best - tol * max(1.0, abs(best))))


def select_index(sums) -> np.ndarray:
    """Responder rule on annotated sums, shape (..., k): argmax, smallest index on ties."""
    sums = np.asarray(sums, dtype=float)
    best = sums.max(axis=-1, keepdims=True)
    near = sums >= best - TIE_TOL * np.maximum(1.0, np.abs(best))
    return near.argmax(axis=-1)


def expected_utility(c: Commitment, belief: Belief, ev: EvaluatedCommitmentSet) -> float:
    _check(belief, ev)
    return float(belief.weights @ ev.joint[:, ev.index(c)])


def optimal_commitment_under_belief(belief: Belief, C: Sequence[Commitment],
                                    ev: EvaluatedCommitmentSet) -> Commitment:
    _check(belief, ev)
    C = sorted(C)
    if not C:
        raise ValueError("empty commitment set")
    eu = belief.weights @ ev.joint[:, ev.indices(C)]
    return C[_first_max(eu)]


def eus(query: Query | Sequence[Commitment], belief: Belief, ev: EvaluatedCommitmentSet) -> float:
    """Closed noiseless form: sum_i mu_i max_{c in Q} v^{p+r}_i(c)."""
    _check(belief, ev)
    cs = list(query)
    if not cs:
        raise ValueError("empty query")
    return float(belief.weights @ ev.joint[:, ev.indices(cs)].max(axis=1))


def eus_upper_bound(belief: Belief, ev: EvaluatedCommitmentSet, C=None) -> float:
    """E_mu[max_c v^{p+r}(c)] with the max taken over ``C`` (default: all of ``ev``)."""
    _check(belief, ev)
    J = ev.joint if C is None else ev.joint[:, ev.indices(list(C))]
    return float(belief.weights @ J.max(axis=1))


def selections(query: Query | Sequence[Commitment], ev: EvaluatedCommitmentSet) -> np.ndarray:
    """Entry each candidate would select from ``query``."""
    return select_index(ev.joint[:, ev.indices(list(query))])


def posterior(belief: Belief, query: Query | Sequence[Commitment], response_index: int,
              ev: EvaluatedCommitmentSet) -> Belief:
    _check(belief, ev)
    k = len(list(query))
    if not 0 <= response_index < k:
        raise IndexError(f"response {response_index} outside a query of size {k}")
    keep = selections(query, ev) == response_index
    w = np.where(keep, belief.weights, 0.0)
    mass = w.sum()
    if mass <= 0:
        raise InconsistentResponse(f"no candidate selects entry {response_index}")
    return Belief(w / mass, belief.candidates)


def greedy_query(belief: Belief, C: Sequence[Commitment], k: int,
                 ev: EvaluatedCommitmentSet) -> Query:
    """Add the commitment of largest marginal EUS gain, ``k`` times."""
    _check(belief, ev)
    if k < 1:
        raise ValueError("k must be at least 1")
    C = sorted(C)
    if len(C) <= k:
        return Query(tuple(C))
    J = ev.joint[:, ev.indices(C)]
    w = belief.weights
    current = np.full(J.shape[0], -np.inf)
    picked: list[int] = []
    free = np.ones(len(C), dtype=bool)
    for _ in range(k):
        totals = w @ np.maximum(current[:, None], J) if picked else w @ J
        totals = np.where(free, totals, -np.inf)
        j = _first_max(totals)
        picked.append(j)
        free[j] = False
        current = np.maximum(current, J[:, j])
    return Query(tuple(C[j] for j in picked))


def _group_best(w: np.ndarray, J: np.ndarray, chunk: int = 1 << 22):
    """For every subset (bitmask) of the rows of ``J``: best column and its weighted sum."""
    n = J.shape[0]
    bits = ((np.arange(1 << n)[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
    W = bits * w[None, :]
    best = np.full(1 << n, -np.inf)
    arg = np.zeros(1 << n, dtype=np.int64)
    step = max(1, chunk // (1 << n))
    for lo in range(0, J.shape[1], step):
        vals = W @ J[:, lo:lo + step]
        j = vals.argmax(axis=1)
        v = vals[np.arange(vals.shape[0]), j]
        better = v > best
        best[better] = v[better]
        arg[better] = j[better] + lo
    best[0] = 0.0
    return best, arg


def _partition_dp(best: np.ndarray, n: int, k: int):
    """Max over partitions of all ``n`` rows into at most ``k`` groups of the summed group bests."""
    full = (1 << n) - 1
    f = np.full((k + 1, 1 << n), -np.inf)
    choice = np.zeros((k + 1, 1 << n), dtype=np.int64)
    f[0, 0] = 0.0
    for j in range(1, k + 1):
        f[j, 0] = 0.0
        for S in range(1, 1 << n):
            low = S & -S
            rest = S ^ low
            top, top_T = f[j - 1, S], 0
            T = rest
            while True:
                blk = T | low
                v = best[blk] + f[j - 1, S ^ blk]
                if v > top:
                    top, top_T = v, blk
                if T == 0:
                    break
                T = (T - 1) & rest
            f[j, S], choice[j, S] = top, top_T
    groups, S, j = [], full, k
    while S and j > 0:
        blk = choice[j, S]
        if blk:
            groups.append(int(blk))
            S ^= blk
        j -= 1
    return float(f[k, full]), groups


def _dp_cost(n: int, n_c: int, k: int) -> int:
    return (1 << n) * max(1, n) * n_c // 64 + 3 ** n * k


def exhaustive_query(belief: Belief, C: Sequence[Commitment], k: int,
                     ev: EvaluatedCommitmentSet, budget: int = EXHAUSTIVE_BUDGET,
                     method: str = "auto") -> Query:
    """EUS-maximising query of size ``min(k, |C|)``.

    ``method="subset"`` scans all size-k subsets of ``C`` in lexicographic order.
    ``method="partition"`` instead splits the supported candidates into at most
    ``k`` groups, each taking its best common commitment: the best split has the
    optimal EUS. It runs a dynamic program over candidate subsets, so its cost
    depends on the number of candidates rather than on ``|C| choose k``.
    ``"auto"`` picks the cheaper. A partition result with fewer than ``k``
    distinct picks is padded with the first unused commitments of ``C``.
    """
    _check(belief, ev)
    C = sorted(C)
    k = min(k, len(C))
    if k < 1:
        raise ValueError("k must be at least 1")
    J = ev.joint[:, ev.indices(C)]
    w = belief.weights
    n_sub = comb(len(C), k)
    supp = belief.support
    n_dp = _dp_cost(len(supp), len(C), k) if len(supp) <= 20 else budget + 1
    if method == "auto":
        method = "subset" if n_sub <= n_dp else "partition"
    if method == "subset":
        if n_sub > budget:
            raise BudgetExceeded(f"{n_sub} subsets exceed the budget of {budget}")
        best, arg = -np.inf, None
        chunk = max(1, 2_000_000 // max(1, J.shape[0] * k))
        it = itertools.combinations(range(len(C)), k)
        while True:
            block = np.array(list(itertools.islice(it, chunk)), dtype=np.int64)
            if block.size == 0:
                break
            vals = np.einsum("i,mi->m", w, J[:, block].max(axis=2).T)
            if vals.max() > best:
                j = _first_max(vals, 0.0)
                best, arg = float(vals[j]), block[j]
        return Query(tuple(C[j] for j in arg))
    if method != "partition":
        raise ValueError(f"unknown method {method!r}")
    if n_dp > budget:
        raise BudgetExceeded(f"partition search over {len(supp)} candidates exceeds the budget")
    best, arg = _group_best(w[supp], J[supp])
    _, groups = _partition_dp(best, len(supp), k)
    picks = sorted({int(arg[g]) for g in groups})
    for j in range(len(C)):
        if len(picks) >= k:
            break
        if j not in picks:
            picks.append(j)
    return Query(tuple(C[j] for j in sorted(picks)))


def random_query(belief: Belief, C: Sequence[Commitment], k: int, seed) -> Query:
    C = sorted(C)
    rng = streams(seed, ("query",))["query"]
    idx = rng.choice(len(C), size=min(k, len(C)), replace=False)
    return Query(tuple(C[j] for j in sorted(idx)))


def make_prior(kind: str, n: int, seed=0, candidates=()) -> Belief:
    """``uniform``; ``random`` (weights proportional to U[0, 1] draws); ``gaussian``
    (weights proportional to the standard normal density at U[-3, 3] draws)."""
    if kind == "uniform":
        return Belief.uniform(n, candidates)
    rng = streams(seed, ("prior",))["prior"]
    if kind == "random":
        w = rng.random(n)
    elif kind == "gaussian":
        w = norm.pdf(rng.uniform(-3.0, 3.0, n))
    else:
        raise ValueError(f"unknown prior kind {kind!r}")
    if w.sum() <= 0:
        w = np.ones(n)
    return Belief(w / w.sum(), candidates)


def multi_round(belief: Belief, k0: int, k: int, C: Sequence[Commitment],
                ev: EvaluatedCommitmentSet, true_index: int):
    """Greedy query of size ``k0``, the true candidate's response, Bayes update,
    then a greedy query of size ``k`` for the updated belief.

    Returns ``(Q0, Q1, mu0, mu1)``.
    """
    if k0 < 1 or k < 1:
        raise ValueError("query sizes must be at least 1")
    q0 = greedy_query(belief, C, k0, ev)
    r = int(selections(q0, ev)[true_index])
    mu1 = posterior(belief, q0, r, ev)
    q1 = greedy_query(mu1, C, k, ev)
    return q0, q1, belief, mu1
