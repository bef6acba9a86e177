"""Recipient side: influence models, the approximate commitment model and its values.

A recipient state is ``(l, u)`` with ``u`` in {minus, plus}. In the product MDP
built here, stage ``h`` has ``2 * L`` states numbered ``u * L + l`` (``u = 0``
minus, ``u = 1`` plus), so policies transfer between influences unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import mdp as mdp_core
from .mdp import FiniteHorizonMdp, Policy
from .provider import Commitment

MINUS, PLUS = 0, 1


@dataclass(frozen=True, eq=False)
class RecipientModel:
    """Local dynamics conditioned on the shared feature.

    ``transitions`` has shape ``(2, L, A, L)`` (stationary) or ``(H, 2, L, A, L)``
    (stage-indexed); ``rewards`` has shape ``(2, L, A)`` or ``(H, 2, L, A)``.
    The leading ``2`` axis is the value of u.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    horizon: int
    initial_local: int
    feature_id: int = 0
    name: str = ""

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=float)
        R = np.asarray(self.rewards, dtype=float)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", R)
        if P.ndim not in (4, 5) or P.shape[-4] != 2:
            raise ValueError("transitions must be (2, L, A, L) or (H, 2, L, A, L)")
        if P.ndim == 5 and P.shape[0] != self.horizon:
            raise ValueError("stage-indexed transitions need H blocks")
        if R.shape[-3:] != P.shape[-4:-1]:
            raise ValueError("rewards must match transitions on (u, l, a)")
        if (P < 0).any() or (np.abs(P.sum(axis=-1) - 1.0) > mdp_core.ROW_TOL).any():
            raise ValueError("local transition rows must be distributions")
        P.setflags(write=False)
        R.setflags(write=False)

    @property
    def n_local(self) -> int:
        return self.transitions.shape[-1]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[-2]

    def P(self, h: int) -> np.ndarray:
        return self.transitions[h] if self.transitions.ndim == 5 else self.transitions

    def R(self, h: int) -> np.ndarray:
        return self.rewards[h] if self.rewards.ndim == 4 else self.rewards

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "initial_local": self.initial_local,
            "feature_id": self.feature_id,
            "name": self.name,
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RecipientModel":
        return cls(np.array(d["transitions"]), np.array(d["rewards"]), int(d["horizon"]),
                   int(d["initial_local"]), int(d.get("feature_id", 0)), d.get("name", ""))


@dataclass(frozen=True)
class Influence:
    """Hazard rates of the flip: ``hazards[h - 1] = Pr(u is plus at h | minus at h - 1)``."""

    hazards: tuple[float, ...]

    def __post_init__(self):
        hz = tuple(float(x) for x in self.hazards)
        if any(not -1e-12 <= x <= 1 + 1e-12 for x in hz):
            raise ValueError("hazard rates must lie in [0, 1]")
        object.__setattr__(self, "hazards", tuple(min(1.0, max(0.0, x)) for x in hz))

    @property
    def horizon(self) -> int:
        return len(self.hazards)

    def flip_cdf(self) -> np.ndarray:
        """Probability that u is plus at each stage 0..H."""
        survive = np.cumprod(1.0 - np.asarray(self.hazards))
        return np.concatenate([[0.0], 1.0 - survive])

    def to_dict(self) -> dict:
        return {"hazards": list(self.hazards)}

    @classmethod
    def from_cdf(cls, cdf) -> "Influence":
        cdf = np.asarray(cdf, dtype=float)
        hz = []
        for h in range(1, len(cdf)):
            alive = 1.0 - cdf[h - 1]
            hz.append(0.0 if alive <= 1e-15 else (cdf[h] - cdf[h - 1]) / alive)
        return cls(tuple(np.clip(hz, 0.0, 1.0)))


def single_branch_influence(c: Commitment, horizon: int) -> Influence:
    hz = [0.0] * horizon
    hz[c.T - 1] = c.p
    return Influence(tuple(hz))


def never_flip(horizon: int) -> Influence:
    return Influence((0.0,) * horizon)


def build_approx_model(model: RecipientModel, influence: Influence) -> FiniteHorizonMdp:
    """Product MDP over (l, u) whose u-dynamics follow ``influence``."""
    H, L, A = model.horizon, model.n_local, model.n_actions
    if influence.horizon != H:
        raise ValueError("influence horizon does not match the recipient")
    trans, rewards = [], []
    for h in range(H):
        lam = influence.hazards[h]
        P = model.P(h)
        block = np.zeros((2, L, A, 2, L))
        block[MINUS, :, :, MINUS, :] = (1.0 - lam) * P[MINUS]
        block[MINUS, :, :, PLUS, :] = lam * P[MINUS]
        block[PLUS, :, :, PLUS, :] = P[PLUS]
        trans.append(sparse.csr_matrix(block.reshape(2 * L * A, 2 * L)))
        rewards.append(model.R(h).reshape(2 * L, A).copy())
    return FiniteHorizonMdp(H, (2 * L,) * (H + 1), A, tuple(trans), tuple(rewards),
                            model.initial_local)


def local_mdp(model: RecipientModel, u: int) -> FiniteHorizonMdp:
    """The recipient MDP with u pinned to ``u`` for the whole episode."""
    H, L, A = model.horizon, model.n_local, model.n_actions
    trans = tuple(sparse.csr_matrix(model.P(h)[u].reshape(L * A, L)) for h in range(H))
    rewards = tuple(model.R(h)[u].copy() for h in range(H))
    return FiniteHorizonMdp(H, (L,) * (H + 1), A, trans, rewards, model.initial_local)


def commitment_value(model: RecipientModel, c: Commitment) -> tuple[float, Policy]:
    approx = build_approx_model(model, single_branch_influence(c, model.horizon))
    values, policy = mdp_core.solve(approx)
    return float(values[0][approx.initial_state]), policy


def value_curve(model: RecipientModel, T: int, ps) -> np.ndarray:
    """``v^r(T, p)`` for an array of probabilities in one batched backward pass.

    From stage ``T`` on, u is fixed in each branch, so only stages before ``T``
    depend on ``p``.
    """
    ps = np.asarray(ps, dtype=float)
    H = model.horizon
    v_minus = np.zeros(model.n_local)
    v_plus = np.zeros(model.n_local)
    for h in reversed(range(T, H)):
        v_minus = _backup(model, h, MINUS, v_minus)
        v_plus = _backup(model, h, PLUS, v_plus)
    v = ps[:, None] * v_plus[None] + (1.0 - ps[:, None]) * v_minus[None]
    for h in reversed(range(T)):
        q = model.R(h)[MINUS][None] + np.einsum("lam,bm->bla", model.P(h)[MINUS], v)
        v = q.max(axis=2)
    return v[:, model.initial_local]


def _backup(model: RecipientModel, h: int, u: int, v_next: np.ndarray) -> np.ndarray:
    q = model.R(h)[u] + model.P(h)[u] @ v_next
    return q.max(axis=1)


def conditional_values(model: RecipientModel, c: Commitment,
                       policy: Policy) -> tuple[float, float]:
    """Value of ``policy`` if u surely flips at ``c.T`` and if u never flips."""
    H = model.horizon
    sure = build_approx_model(model, single_branch_influence(Commitment(c.T, 1.0), H))
    never = build_approx_model(model, never_flip(H))
    v1 = mdp_core.evaluate(sure, policy)[0][model.initial_local]
    v0 = mdp_core.evaluate(never, policy)[0][model.initial_local]
    return float(v1), float(v0)


def evaluate_under(model: RecipientModel, policy: Policy, influence: Influence) -> float:
    approx = build_approx_model(model, influence)
    return float(mdp_core.evaluate(approx, policy)[0][approx.initial_state])


@dataclass(frozen=True)
class AssumptionCheck:
    holds: bool
    worst_gap: float
    worst_state: tuple[int, int] | None  # (stage, local state) with the largest violation

    def __bool__(self):
        return self.holds


def check_assumption_u(model: RecipientModel, atol: float = 1e-9) -> AssumptionCheck:
    """Check that pinning u to plus is never worse than pinning it to minus."""
    v_minus, _ = mdp_core.solve(local_mdp(model, MINUS))
    v_plus, _ = mdp_core.solve(local_mdp(model, PLUS))
    gaps = np.array([v_minus[h] - v_plus[h] for h in range(model.horizon + 1)])
    h, l = np.unravel_index(int(np.argmax(gaps)), gaps.shape)
    worst = float(gaps[h, l])
    holds = worst <= atol
    return AssumptionCheck(holds, worst, None if holds else (int(h), int(l)))


def baseline_value(model: RecipientModel) -> float:
    """Optimal value with u pinned to minus (no commitment)."""
    v, _ = mdp_core.solve(local_mdp(model, MINUS))
    return float(v[0][model.initial_local])
