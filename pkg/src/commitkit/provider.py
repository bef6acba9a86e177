"""Provider side: feasibility frontier, commitment-constrained planning, verification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import mdp as mdp_core
from .lp import HighsLp, LpInfeasible, tableau_simplex
from .mdp import FiniteHorizonMdp, OccupancyMeasure, Policy

FEAS_SLACK = 1e-9


@dataclass(frozen=True, order=True)
class Commitment:
    """Promise to reach a plus state of ``feature_id`` by stage ``T`` with probability >= ``p``."""

    T: int
    p: float
    feature_id: int = 0

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("commitment time must be >= 1")
        if not -1e-12 <= self.p <= 1 + 1e-12:
            raise ValueError("commitment probability must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {"T": self.T, "p": self.p, "u_c": self.feature_id}

    @classmethod
    def from_dict(cls, d: dict) -> "Commitment":
        return cls(int(d["T"]), float(d["p"]), int(d.get("u_c", 0)))


class Infeasible(ValueError):
    def __init__(self, commitment: Commitment, p_max: float):
        super().__init__(f"{commitment} infeasible: max feasible probability is {p_max:.12g}")
        self.commitment = commitment
        self.p_max = p_max


@dataclass(eq=False)
class ProviderModel:
    """Provider MDP plus, per feature id, the boolean plus-state mask of every stage."""

    mdp: FiniteHorizonMdp
    plus_states: dict[int, list[np.ndarray]]
    _lp_cache: dict = field(default_factory=dict, init=False, repr=False)
    _pmax_cache: dict = field(default_factory=dict, init=False, repr=False)
    _dp_cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        H = self.mdp.horizon
        for fid, masks in self.plus_states.items():
            if len(masks) != H + 1:
                raise ValueError(f"feature {fid}: need a plus mask for each stage 0..H")
            masks[:] = [np.asarray(m, dtype=bool) for m in masks]
            if masks[0][self.mdp.initial_state]:
                raise ValueError(f"feature {fid}: initial state already has u = plus")
            bad = permanence_violation(self.mdp, masks)
            if bad is not None:
                raise ValueError(f"feature {fid}: flip not permanent at (h, s) = {bad}")

    @property
    def horizon(self) -> int:
        return self.mdp.horizon

    @property
    def features(self) -> list[int]:
        return sorted(self.plus_states)

    def plus(self, feature_id: int, h: int) -> np.ndarray:
        return self.plus_states[feature_id][h]

    def to_dict(self) -> dict:
        d = mdp_core.to_dict(self.mdp)
        labels = self.mdp.state_labels or tuple(tuple(range(n)) for n in self.mdp.n_states)
        d["plus_states"] = {
            str(fid): [[h, labels[h][int(s)]] for h in range(self.horizon + 1)
                       for s in np.flatnonzero(masks[h])]
            for fid, masks in sorted(self.plus_states.items())
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProviderModel":
        m = mdp_core.from_dict(d)
        labels = m.state_labels
        pos = [{lab: i for i, lab in enumerate(s)} for s in labels]
        plus = {}
        for fid, entries in d["plus_states"].items():
            masks = [np.zeros(n, dtype=bool) for n in m.n_states]
            for h, s in entries:
                masks[h][pos[h][s]] = True
            plus[int(fid)] = masks
        return cls(m, plus)


def permanence_violation(m: FiniteHorizonMdp, masks: list[np.ndarray]):
    """First (h, s) where a plus state can move to a non-plus state, else None."""
    A = m.n_actions
    for h in range(m.horizon):
        P = m.transitions[h]
        for s in np.flatnonzero(masks[h]):
            rows = P[s * A:(s + 1) * A]
            if rows.nnz and not masks[h + 1][rows.indices[rows.data > 0]].all():
                return (h, int(s))
    return None


def max_feasible_probability(model: ProviderModel, T: int, feature_id: int = 0) -> float:
    """Largest probability of standing in a plus state at stage ``T``."""
    key = (T, feature_id)
    if key not in model._pmax_cache:
        m = model.mdp
        if not 1 <= T <= m.horizon:
            raise ValueError("commitment time out of range")
        v = model.plus(feature_id, T).astype(float)
        for h in reversed(range(T)):
            q = (m.transitions[h] @ v).reshape(m.n_states[h], m.n_actions)
            if m.action_mask is not None:
                q = np.where(m.action_mask[h], q, -np.inf)
            v = q.max(axis=1)
        model._pmax_cache[key] = float(min(1.0, v[m.initial_state]))
    return model._pmax_cache[key]


def reach_profile(model: ProviderModel, policy: Policy, feature_id: int = 0) -> np.ndarray:
    """Probability of being in a plus state at each stage 0..H under ``policy``."""
    dists = mdp_core.state_distributions(model.mdp, policy)
    return np.array([d[model.plus(feature_id, h)].sum() for h, d in enumerate(dists)])


def verify_commitment_policy(model: ProviderModel, policy: Policy, c: Commitment) -> float:
    """Exact probability that ``policy`` has realised the commitment feature by ``c.T``."""
    return float(reach_profile(model, policy, c.feature_id)[c.T])


class CommitmentLp:
    """Occupancy-measure LP of one (T, feature) pair, reusable across probabilities.

    Columns are ordered ``x(h, s, a)`` by (h, s, a) for ``h < H``, then the
    terminate column of every stage-``H`` state, then the slack ``xi``. Rows are
    the flow constraints stage by stage followed by the commitment row
    ``sum_{s in plus_T} sum_a x(T, s, a) - xi = p``.
    """

    def __init__(self, model: ProviderModel, T: int, feature_id: int = 0):
        m = model.mdp
        H, A = m.horizon, m.n_actions
        self.model, self.T, self.feature_id = model, T, feature_id
        offs = np.zeros(H + 2, dtype=np.int64)
        for h in range(H):
            offs[h + 1] = offs[h] + m.n_states[h] * A
        offs[H + 1] = offs[H] + m.n_states[H]
        self.offsets = offs
        n_x = int(offs[H + 1])
        self.n_cols = n_x + 1
        row_offs = np.concatenate([[0], np.cumsum(m.n_states)])
        n_rows = int(row_offs[-1]) + 1
        self.commit_row = n_rows - 1

        blocks_r, blocks_c, blocks_v = [], [], []
        # sum_a x(h, s, a): +1 in row (h, s)
        for h in range(H + 1):
            n = m.n_states[h]
            width = A if h < H else 1
            s_idx = np.repeat(np.arange(n), width)
            blocks_r.append(row_offs[h] + s_idx)
            blocks_c.append(offs[h] + np.arange(n * width))
            blocks_v.append(np.ones(n * width))
        # inflow: -P(s'|s,a) x(h, s, a) in row (h+1, s')
        for h in range(H):
            P = m.transitions[h].tocoo()
            blocks_r.append(row_offs[h + 1] + P.col)
            blocks_c.append(offs[h] + P.row)
            blocks_v.append(-P.data)
        plus = np.flatnonzero(model.plus(feature_id, T))
        width = A if T < H else 1
        cols = (offs[T] + (plus[:, None] * width + np.arange(width))).ravel()
        blocks_r.append(np.full(cols.size, self.commit_row))
        blocks_c.append(cols)
        blocks_v.append(np.ones(cols.size))
        blocks_r.append([self.commit_row])
        blocks_c.append([n_x])
        blocks_v.append([-1.0])
        self.A = sparse.csc_matrix(
            (np.concatenate(blocks_v), (np.concatenate(blocks_r), np.concatenate(blocks_c))),
            shape=(n_rows, self.n_cols))
        self.b = np.zeros(n_rows)
        self.b[m.initial_state] = 1.0
        self.c = np.zeros(self.n_cols)
        for h in range(H):
            self.c[offs[h]:offs[h + 1]] = m.rewards[h].ravel()
        self.masked_cols = []
        if m.action_mask is not None:
            for h in range(H):
                dead = np.flatnonzero(~m.action_mask[h].ravel())
                self.masked_cols.extend((offs[h] + dead).tolist())
        self._highs = None

    @property
    def p_max(self) -> float:
        return max_feasible_probability(self.model, self.T, self.feature_id)

    def _unpack(self, x: np.ndarray) -> OccupancyMeasure:
        m = self.model.mdp
        A = m.n_actions
        out = []
        for h in range(m.horizon):
            out.append(x[self.offsets[h]:self.offsets[h + 1]].reshape(m.n_states[h], A))
        out.append(x[self.offsets[m.horizon]:self.offsets[m.horizon + 1]].reshape(-1, 1))
        return [np.clip(o, 0.0, None) for o in out]

    def solve(self, p: float, backend: str = "highs", warm: bool = True,
              occupancy: bool = True):
        """Return ``(value, occupancy)`` for commitment probability ``p``.

        With ``occupancy=False`` the second item is None (saves the copy-out).
        """
        p_max = self.p_max
        if p > p_max + FEAS_SLACK:
            raise Infeasible(Commitment(self.T, min(p, 1.0), self.feature_id), p_max)
        p = min(max(p, 0.0), p_max)
        if backend == "highs":
            if self._highs is None:
                self._highs = HighsLp(self.c, self.A, self.b)
                for col in self.masked_cols:
                    self._highs.set_upper(col, 0.0)
            self._highs.set_rhs(self.commit_row, p)
            try:
                res = self._highs.solve(warm=warm, with_x=occupancy)
            except LpInfeasible:
                # p_max sits on the feasibility boundary; one cold retry
                res = self._highs.solve(warm=False, with_x=occupancy)
        elif backend == "tableau":
            A, c = self.A, self.c
            if self.masked_cols:
                keep = np.setdiff1d(np.arange(self.n_cols), self.masked_cols)
                full = tableau_simplex(c[keep], A[:, keep], self._rhs(p))
                x = np.zeros(self.n_cols)
                x[keep] = full.x
                res = type(full)(x=x, value=full.value, iterations=full.iterations)
            else:
                res = tableau_simplex(c, A, self._rhs(p))
        else:
            raise ValueError(f"unknown LP backend {backend!r}")
        return res.value, (self._unpack(res.x) if occupancy else None)

    def _rhs(self, p: float) -> np.ndarray:
        b = self.b.copy()
        b[self.commit_row] = p
        return b

    def values(self, ps) -> np.ndarray:
        """Commitment values over a probability sweep (warm-started)."""
        return np.array([self.solve(float(p), occupancy=False)[0] for p in ps])


def commitment_lp(model: ProviderModel, T: int, feature_id: int = 0) -> CommitmentLp:
    key = (T, feature_id)
    if key not in model._lp_cache:
        model._lp_cache[key] = CommitmentLp(model, T, feature_id)
    return model._lp_cache[key]


def commitment_value(model: ProviderModel, c: Commitment, backend: str = "highs",
                     warm: bool = False) -> tuple[float, Policy]:
    """Optimal provider value subject to ``c`` and the committed (stochastic) policy.

    Raises :class:`Infeasible` when ``c.p`` exceeds the maximum feasible probability.
    """
    lp = commitment_lp(model, c.T, c.feature_id)
    value, x = lp.solve(c.p, backend=backend, warm=warm)
    return value, mdp_core.policy_from_occupancy(model.mdp, x)


def unconstrained_value(model: ProviderModel) -> float:
    values, _ = mdp_core.solve(model.mdp)
    return float(values[0][model.mdp.initial_state])
