"""Finite-horizon MDPs with explicitly stage-partitioned state spaces.

States are indexed per stage: stage ``h`` holds ``n_states[h]`` states numbered
``0..n_states[h]-1`` and every transition from stage ``h`` lands in stage
``h + 1``. Transitions for stage ``h`` are stored as a sparse matrix with one
row per (state, action) pair, row index ``s * n_actions + a``.

Policies, value tables and occupancy measures are plain lists of numpy arrays,
one entry per stage:

* policy: ``policy[h]`` has shape ``(n_states[h], n_actions)``, ``h < H``
* values: ``values[h]`` has shape ``(n_states[h],)``, ``h <= H``
* occupancy: ``x[h]`` has shape ``(n_states[h], n_actions)`` for ``h < H`` and
  ``x[H]`` has shape ``(n_states[H], 1)`` (the synthetic terminate action)
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

ROW_TOL = 1e-9
TIE_TOL = 1e-12

Policy = list[np.ndarray]
ValueTable = list[np.ndarray]
OccupancyMeasure = list[np.ndarray]


class MdpValidationError(ValueError):
    pass


class PolicyEvaluationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FiniteHorizonMdp:
    """Immutable finite-horizon MDP.

    ``transitions[h]`` is a CSR matrix of shape ``(n_states[h] * n_actions,
    n_states[h + 1])`` and ``rewards[h]`` an array of shape ``(n_states[h],
    n_actions)``. ``action_mask[h]`` (optional) marks available actions; rows
    of unavailable actions are ignored.
    """

    horizon: int
    n_states: tuple[int, ...]
    n_actions: int
    transitions: tuple[sparse.csr_matrix, ...]
    rewards: tuple[np.ndarray, ...]
    initial_state: int = 0
    action_mask: tuple[np.ndarray, ...] | None = None
    state_labels: tuple[tuple, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        for r in self.rewards:
            r.setflags(write=False)
        if self.action_mask is not None:
            for m in self.action_mask:
                m.setflags(write=False)
        validate(self)

    @property
    def stages(self) -> range:
        return range(self.horizon)

    def mask(self, h: int) -> np.ndarray:
        if self.action_mask is None:
            return np.ones((self.n_states[h], self.n_actions), dtype=bool)
        return self.action_mask[h]

    def dense_transitions(self, h: int) -> np.ndarray:
        """Stage-``h`` transitions as a dense ``(n_h, A, n_{h+1})`` array."""
        P = self.transitions[h].toarray()
        return P.reshape(self.n_states[h], self.n_actions, self.n_states[h + 1])

    def __repr__(self):
        return (f"FiniteHorizonMdp(horizon={self.horizon}, "
                f"states={sum(self.n_states)}, actions={self.n_actions})")


def validate(mdp: FiniteHorizonMdp) -> None:
    H = mdp.horizon
    if H < 1:
        raise MdpValidationError("horizon must be positive")
    if len(mdp.n_states) != H + 1:
        raise MdpValidationError("need one state count per stage 0..H")
    if len(mdp.transitions) != H or len(mdp.rewards) != H:
        raise MdpValidationError("need transitions and rewards for stages 0..H-1")
    if not 0 <= mdp.initial_state < mdp.n_states[0]:
        raise MdpValidationError("initial state out of range")
    A = mdp.n_actions
    for h in range(H):
        P = mdp.transitions[h]
        n, n_next = mdp.n_states[h], mdp.n_states[h + 1]
        if P.shape != (n * A, n_next):
            raise MdpValidationError(
                f"stage {h}: transition shape {P.shape} != {(n * A, n_next)}")
        if mdp.rewards[h].shape != (n, A):
            raise MdpValidationError(f"stage {h}: reward shape mismatch")
        if P.nnz and P.data.min() < 0:
            raise MdpValidationError(f"stage {h}: negative transition probability")
        mask = mdp.mask(h).ravel()
        sums = np.asarray(P.sum(axis=1)).ravel()
        bad = mask & (np.abs(sums - 1.0) > ROW_TOL)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise MdpValidationError(
                f"stage {h}: row (s={i // A}, a={i % A}) sums to {sums[i]}")
        if not mdp.mask(h).any(axis=1).all():
            raise MdpValidationError(f"stage {h}: state without actions")


def from_dense(P: Sequence[np.ndarray], R: Sequence[np.ndarray], initial_state: int = 0,
               action_mask=None, state_labels=None) -> FiniteHorizonMdp:
    """Build from per-stage dense arrays ``P[h]: (n_h, A, n_{h+1})``, ``R[h]: (n_h, A)``."""
    H = len(P)
    A = P[0].shape[1]
    n_states = tuple(int(p.shape[0]) for p in P) + (int(P[-1].shape[2]),)
    trans = tuple(sparse.csr_matrix(np.asarray(p, dtype=float).reshape(-1, p.shape[2]))
                  for p in P)
    rewards = tuple(np.array(r, dtype=float) for r in R)
    mask = None if action_mask is None else tuple(np.array(m, dtype=bool) for m in action_mask)
    return FiniteHorizonMdp(H, n_states, A, trans, rewards, initial_state, mask, state_labels)


def from_stationary(P, R, horizon: int, initial_state: int, prune: bool = True):
    """Unroll a stationary MDP ``P: (S, A, S)`` (dense or CSR with rows ``s*A+a``).

    With ``prune`` only states reachable from ``initial_state`` are kept at each
    stage. Returns ``(mdp, index)`` where ``index[h]`` maps stage-``h`` state
    numbers back to the original state ids.
    """
    if sparse.issparse(P):
        Pm = sparse.csr_matrix(P)
        S = Pm.shape[1]
        A = Pm.shape[0] // S
    else:
        P = np.asarray(P, dtype=float)
        S, A = P.shape[0], P.shape[1]
        Pm = sparse.csr_matrix(P.reshape(S * A, S))
    R = np.asarray(R, dtype=float)
    reach = np.zeros(S, dtype=bool)
    reach[initial_state] = True
    index = []
    for h in range(horizon + 1):
        ids = np.flatnonzero(reach) if prune else np.arange(S)
        index.append(ids)
        if h == horizon:
            break
        rows = (ids[:, None] * A + np.arange(A)).ravel()
        nxt = np.asarray(abs(Pm[rows]).sum(axis=0)).ravel() > 0
        reach = nxt
    trans, rewards = [], []
    for h in range(horizon):
        ids, nxt = index[h], index[h + 1]
        rows = (ids[:, None] * A + np.arange(A)).ravel()
        trans.append(sparse.csr_matrix(Pm[rows][:, nxt]))
        rewards.append(R[ids].copy())
    init = int(np.searchsorted(index[0], initial_state))
    labels = tuple(tuple(int(i) for i in ids) for ids in index)
    mdp = FiniteHorizonMdp(horizon, tuple(len(i) for i in index), A, tuple(trans),
                           tuple(rewards), init, None, labels)
    return mdp, index


def _q_values(mdp: FiniteHorizonMdp, h: int, v_next: np.ndarray) -> np.ndarray:
    q = mdp.rewards[h] + (mdp.transitions[h] @ v_next).reshape(mdp.n_states[h], mdp.n_actions)
    if mdp.action_mask is not None:
        q = np.where(mdp.action_mask[h], q, -np.inf)
    return q


def greedy_actions(q: np.ndarray) -> np.ndarray:
    """Lowest action id among those within ``TIE_TOL`` of the row maximum."""
    best = q.max(axis=1, keepdims=True)
    near = q >= best - TIE_TOL * np.maximum(1.0, np.abs(best))
    return near.argmax(axis=1)


def solve(mdp: FiniteHorizonMdp) -> tuple[ValueTable, Policy]:
    """Backward induction. Returns optimal values and a deterministic policy."""
    H = mdp.horizon
    values: ValueTable = [None] * (H + 1)
    policy: Policy = [None] * H
    values[H] = np.zeros(mdp.n_states[H])
    for h in reversed(range(H)):
        q = _q_values(mdp, h, values[h + 1])
        a = greedy_actions(q)
        n = mdp.n_states[h]
        values[h] = q[np.arange(n), a]
        pi = np.zeros((n, mdp.n_actions))
        pi[np.arange(n), a] = 1.0
        policy[h] = pi
    return values, policy


def check_policy(mdp: FiniteHorizonMdp, policy: Policy) -> None:
    if len(policy) != mdp.horizon:
        raise PolicyEvaluationError("policy needs one row block per stage 0..H-1")
    for h, pi in enumerate(policy):
        if pi is None or pi.shape != (mdp.n_states[h], mdp.n_actions):
            raise PolicyEvaluationError(f"stage {h}: policy block missing or misshaped")
        if (pi < -ROW_TOL).any() or (np.abs(pi.sum(axis=1) - 1.0) > ROW_TOL).any():
            raise PolicyEvaluationError(f"stage {h}: policy rows must be distributions")


def evaluate(mdp: FiniteHorizonMdp, policy: Policy) -> ValueTable:
    """Exact expected return of a fixed (possibly stochastic) policy."""
    check_policy(mdp, policy)
    H = mdp.horizon
    values: ValueTable = [None] * (H + 1)
    values[H] = np.zeros(mdp.n_states[H])
    for h in reversed(range(H)):
        q = mdp.rewards[h] + (mdp.transitions[h] @ values[h + 1]).reshape(
            mdp.n_states[h], mdp.n_actions)
        # zero-probability actions may be masked (q = -inf would poison the sum)
        values[h] = np.where(policy[h] > 0, policy[h] * q, 0.0).sum(axis=1)
    return values


def state_distributions(mdp: FiniteHorizonMdp, policy: Policy) -> list[np.ndarray]:
    """Marginal state distribution at every stage 0..H."""
    check_policy(mdp, policy)
    d = np.zeros(mdp.n_states[0])
    d[mdp.initial_state] = 1.0
    out = [d]
    for h in range(mdp.horizon):
        x = (d[:, None] * policy[h]).ravel()
        d = mdp.transitions[h].T @ x
        out.append(d)
    return out


def occupancy(mdp: FiniteHorizonMdp, policy: Policy) -> OccupancyMeasure:
    dists = state_distributions(mdp, policy)
    x = [dists[h][:, None] * policy[h] for h in range(mdp.horizon)]
    x.append(dists[-1][:, None].copy())
    return x


def occupancy_value(mdp: FiniteHorizonMdp, x: OccupancyMeasure) -> float:
    return float(sum((x[h] * mdp.rewards[h]).sum() for h in range(mdp.horizon)))


def policy_from_occupancy(mdp: FiniteHorizonMdp, x: OccupancyMeasure,
                          zero_tol: float = 0.0) -> Policy:
    """Normalise occupancy rows; rows with no mass get a uniform row over available actions."""
    policy: Policy = []
    for h in range(mdp.horizon):
        xh = np.asarray(x[h], dtype=float)
        if (xh < -1e-9).any():
            raise MdpValidationError(f"stage {h}: negative occupancy")
        xh = np.clip(xh, 0.0, None) * mdp.mask(h)
        tot = xh.sum(axis=1, keepdims=True)
        uniform = mdp.mask(h) / mdp.mask(h).sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            pi = np.where(tot > zero_tol, xh / np.where(tot > 0, tot, 1.0), uniform)
        policy.append(pi)
    return policy


def check_flow(mdp: FiniteHorizonMdp, x: OccupancyMeasure, atol: float = 1e-9) -> float:
    """Largest flow-conservation violation of ``x`` (0 for a valid occupancy measure)."""
    src = np.zeros(mdp.n_states[0])
    src[mdp.initial_state] = 1.0
    worst = float(np.abs(x[0].sum(axis=1) - src).max())
    for h in range(mdp.horizon):
        inflow = mdp.transitions[h].T @ np.asarray(x[h]).ravel()
        worst = max(worst, float(np.abs(x[h + 1].sum(axis=1) - inflow).max()))
    return worst


# --- JSON -----------------------------------------------------------------

def to_dict(mdp: FiniteHorizonMdp) -> dict:
    A = mdp.n_actions
    labels = mdp.state_labels or tuple(tuple(range(n)) for n in mdp.n_states)
    transitions, rewards, available = [], [], []
    for h in range(mdp.horizon):
        P = mdp.transitions[h]
        mask = mdp.mask(h)
        for s in range(mdp.n_states[h]):
            if mdp.action_mask is not None and not mask[s].all():
                available.append([h, labels[h][s], [int(a) for a in np.flatnonzero(mask[s])]])
            for a in range(A):
                if not mask[s, a]:
                    continue
                row = P.getrow(s * A + a)
                nxt = [[labels[h + 1][int(j)], float(v)] for j, v in zip(row.indices, row.data)]
                nxt.sort(key=lambda e: str(e[0]))
                transitions.append([h, labels[h][s], a, nxt])
                rewards.append([h, labels[h][s], a, float(mdp.rewards[h][s, a])])
    out = {
        "horizon": mdp.horizon,
        "stages": [list(l) for l in labels],
        "actions": {"count": A},
        "transitions": transitions,
        "rewards": rewards,
        "initial_state": labels[0][mdp.initial_state],
    }
    if available:
        out["actions"]["available"] = available
    return out


def from_dict(d: dict) -> FiniteHorizonMdp:
    H = int(d["horizon"])
    stages = [list(s) for s in d["stages"]]
    pos = [{lab: i for i, lab in enumerate(s)} for s in stages]
    A = int(d["actions"]["count"])
    n = [len(s) for s in stages]
    mask = None
    if d["actions"].get("available"):
        mask = [np.ones((n[h], A), dtype=bool) for h in range(H)]
        for h, s, acts in d["actions"]["available"]:
            mask[h][pos[h][s]] = False
            mask[h][pos[h][s], list(acts)] = True
    rows = [[] for _ in range(H)]
    cols = [[] for _ in range(H)]
    vals = [[] for _ in range(H)]
    for h, s, a, nxt in d["transitions"]:
        for t, prob in nxt:
            rows[h].append(pos[h][s] * A + a)
            cols[h].append(pos[h + 1][t])
            vals[h].append(prob)
    R = [np.zeros((n[h], A)) for h in range(H)]
    for h, s, a, r in d["rewards"]:
        R[h][pos[h][s], a] = r
    trans = tuple(sparse.csr_matrix((vals[h], (rows[h], cols[h])), shape=(n[h] * A, n[h + 1]))
                  for h in range(H))
    labels = tuple(tuple(s) for s in stages)
    return FiniteHorizonMdp(H, tuple(n), A, trans, tuple(R), pos[0][d["initial_state"]],
                            None if mask is None else tuple(mask), labels)


def dumps(obj: dict) -> str:
    """Deterministic JSON used for every serialised artifact."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
