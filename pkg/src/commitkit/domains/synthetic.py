"""Random provider MDPs with one absorbing commitment state."""

from __future__ import annotations

import logging

import numpy as np

from ..mdp import from_stationary
from ..provider import ProviderModel, max_feasible_probability
from .rng import derive_seed, streams

log = logging.getLogger(__name__)

N_STATES = 10
N_ACTIONS = 3
HORIZON = 20


def synthetic_arrays(seed, n_states: int = N_STATES, n_actions: int = N_ACTIONS):
    """Stationary ``(P, R, s0)``; the last state is the absorbing plus state."""
    rng = streams(seed, ("transitions", "rewards", "initial"))
    plus = n_states - 1
    P = rng["transitions"].random((n_states, n_actions, n_states))
    P /= P.sum(axis=2, keepdims=True)
    P[plus] = 0.0
    P[plus, :, plus] = 1.0
    R = rng["rewards"].random((n_states, n_actions))
    R[plus] = 0.0
    s0 = int(rng["initial"].integers(0, n_states - 1))
    return P, R, s0


def gen_synthetic_provider(seed, n_states: int = N_STATES, n_actions: int = N_ACTIONS,
                           horizon: int = HORIZON) -> ProviderModel:
    """Provider MDP of the synthetic domain (feature id 0 is the absorbing state).

    If the plus state is unreachable for every commitment time the instance is
    regenerated from a derived seed; each regeneration is logged.
    """
    attempt = 0
    base = seed
    while True:
        P, R, s0 = synthetic_arrays(seed, n_states, n_actions)
        mdp, index = from_stationary(P, R, horizon, s0, prune=False)
        plus = [ids == n_states - 1 for ids in index]
        model = ProviderModel(mdp, {0: plus})
        if any(max_feasible_probability(model, T) > 0 for T in range(1, horizon + 1)):
            return model
        attempt += 1
        log.info("synthetic seed %s: plus state unreachable, regenerating (attempt %d)",
                 base, attempt)
        seed = derive_seed(*(base if isinstance(base, (list, tuple)) else [base]), attempt)
