"""Centralized baseline and execution of commitment-derived joint policies.

The joint model pairs a provider state ``s`` with a recipient local state
``l``; the recipient's u is read from ``s``. Solving it gives the MMDP value
that no pair of decentralized policies can beat.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .. import mdp as mdp_core
from .. import provider as prov
from .. import recipient as rec
from ..mdp import FiniteHorizonMdp, Policy
from ..provider import Commitment, ProviderModel
from ..recipient import Influence, RecipientModel

JOINT_BUDGET = 200_000


class BudgetExceeded(RuntimeError):
    pass


def _u_of(provider: ProviderModel, recipient: RecipientModel, h: int) -> np.ndarray:
    fid = recipient.feature_id
    if fid not in provider.plus_states:
        return np.zeros(provider.mdp.n_states[h], dtype=np.int64)
    return provider.plus(fid, h).astype(np.int64)


def _check_budget(provider, recipient, budget):
    L = recipient.n_local
    worst = max(provider.mdp.n_states) * L
    if worst > budget:
        raise BudgetExceeded(f"joint stage with {worst} states exceeds the budget of {budget}")


def build_joint_mmdp(provider: ProviderModel, recipient: RecipientModel,
                     budget: int = JOINT_BUDGET) -> FiniteHorizonMdp:
    """Explicit joint MDP; state ``s * L + l``, action ``a_p * A_r + a_r``."""
    _check_budget(provider, recipient, budget)
    m = provider.mdp
    if m.horizon != recipient.horizon:
        raise ValueError("provider and recipient horizons differ")
    L, Ar, Ap = recipient.n_local, recipient.n_actions, m.n_actions
    trans, rewards = [], []
    for h in range(m.horizon):
        n = m.n_states[h]
        u = _u_of(provider, recipient, h)
        Pp = m.dense_transitions(h)  # (n, Ap, n')
        Pr = recipient.P(h)[u]  # (n, L, Ar, L)
        Rr = recipient.R(h)[u]  # (n, L, Ar)
        block = np.einsum("sap,slbm->slabpm", Pp, Pr)
        trans.append(sparse.csr_matrix(block.reshape(n * L * Ap * Ar, -1)))
        R = m.rewards[h][:, None, :, None] + Rr[:, :, None, :]
        rewards.append(R.reshape(n * L, Ap * Ar))
    n_states = tuple(k * L for k in m.n_states)
    s0 = m.initial_state * L + recipient.initial_local
    return FiniteHorizonMdp(m.horizon, n_states, Ap * Ar, tuple(trans), tuple(rewards), s0)


def joint_optimal_value(provider: ProviderModel, recipient: RecipientModel,
                        budget: int = JOINT_BUDGET) -> float:
    """MMDP value by backward induction on the factored joint model."""
    _check_budget(provider, recipient, budget)
    m = provider.mdp
    H = m.horizon
    V = np.zeros((m.n_states[H], recipient.n_local))
    for h in reversed(range(H)):
        u = _u_of(provider, recipient, h)
        Pp = m.dense_transitions(h)
        W = np.einsum("sap,pm->sam", Pp, V)
        newV = np.empty((m.n_states[h], recipient.n_local))
        for flag in (0, 1):
            rows = np.flatnonzero(u == flag)
            if rows.size == 0:
                continue
            Pr, Rr = recipient.P(h)[flag], recipient.R(h)[flag]
            # best recipient action for each (s, a_p, l), then best provider action
            q = np.einsum("sam,lbm->salb", W[rows], Pr) + Rr[None, None]
            q = q.max(axis=3) + m.rewards[h][rows][:, :, None]
            newV[rows] = q.max(axis=1)
        V = newV
    return float(V[m.initial_state, recipient.initial_local])


def flip_cdf(provider: ProviderModel, policy: Policy, feature_id: int) -> np.ndarray:
    """Probability that the feature is plus at each stage 0..H under ``policy``."""
    d = mdp_core.state_distributions(provider.mdp, policy)
    return np.array([float(d[h][provider.plus(feature_id, h)].sum())
                     for h in range(provider.horizon + 1)])


def true_influence(provider: ProviderModel, policy: Policy, feature_id: int) -> Influence:
    """First-passage hazards ``(F_h - F_{h-1}) / (1 - F_{h-1})`` of the flip."""
    return Influence.from_cdf(flip_cdf(provider, policy, feature_id))


def evaluate_joint_execution(provider: ProviderModel, recipient: RecipientModel,
                             c: Commitment) -> float:
    """Value of ``(pi^p(c), pi^r(c))`` when the recipient faces the true influence."""
    vp, pi_p = prov.commitment_value(provider, c)
    c_r = c if c.feature_id == recipient.feature_id else Commitment(c.T, 0.0, c.feature_id)
    _, pi_r = rec.commitment_value(recipient, c_r)
    fid = recipient.feature_id
    if fid in provider.plus_states:
        infl = true_influence(provider, pi_p, fid)
    else:
        infl = rec.never_flip(recipient.horizon)
    return vp + rec.evaluate_under(recipient, pi_r, infl)


def null_value(provider: ProviderModel, recipient: RecipientModel) -> float:
    """Sum of the commitment-free local optima (u pinned to minus for the recipient)."""
    return prov.unconstrained_value(provider) + rec.baseline_value(recipient)


def random_commitment(provider: ProviderModel, feature_id: int, rng: np.random.Generator):
    """Uniform commitment time, then a probability uniform on ``[0, p_max(T)]``."""
    T = int(rng.integers(1, provider.horizon + 1))
    p_max = prov.max_feasible_probability(provider, T, feature_id)
    return Commitment(T, float(rng.uniform(0.0, p_max)) if p_max > 0 else 0.0, feature_id)


def random_policy_value(provider: ProviderModel, recipient: RecipientModel) -> float:
    """Both agents acting uniformly at random."""
    def uniform(m):
        return [np.full((m.n_states[h], m.n_actions), 1.0 / m.n_actions) for h in range(m.horizon)]

    pi_p = uniform(provider.mdp)
    vp = mdp_core.evaluate(provider.mdp, pi_p)[0][provider.mdp.initial_state]
    L = recipient.n_local
    pi_r = [np.full((2 * L, recipient.n_actions), 1.0 / recipient.n_actions)
            for _ in range(recipient.horizon)]
    fid = recipient.feature_id
    infl = (true_influence(provider, pi_p, fid) if fid in provider.plus_states
            else rec.never_flip(recipient.horizon))
    return float(vp) + rec.evaluate_under(recipient, pi_r, infl)
