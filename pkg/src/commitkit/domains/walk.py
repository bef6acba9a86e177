"""One-dimensional walk recipient with a gate keyed to the shared feature.

Locations 0..9; the gate sits between 0 and 1 and is open when u is plus.
Actions: 0 = left, 1 = stay, 2 = right. Both ends are absorbing and pay 0 per
step; elsewhere each step costs 1, bumping into the closed gate costs another
10, and stepping onto location 0 pays ``r0`` once.
"""

from __future__ import annotations

import numpy as np

from ..recipient import MINUS, PLUS, RecipientModel
from .rng import streams

N_LOC = 10
LEFT, STAY, RIGHT = 0, 1, 2
STEP_COST = -1.0
BUMP_COST = -10.0
HORIZON = 20


def walk_recipient(L0: int, r0: float, horizon: int = HORIZON,
                   n_loc: int = N_LOC) -> RecipientModel:
    P = np.zeros((2, n_loc, 3, n_loc))
    R = np.zeros((2, n_loc, 3))
    last = n_loc - 1
    for u in (MINUS, PLUS):
        for l in range(n_loc):
            if l in (0, last):
                P[u, l, :, l] = 1.0
                continue
            for a, step in ((LEFT, -1), (STAY, 0), (RIGHT, 1)):
                R[u, l, a] = STEP_COST
                target = l + step
                if l == 1 and a == LEFT and u == MINUS:
                    target = l
                    R[u, l, a] += BUMP_COST
                elif target == 0:
                    R[u, l, a] += r0
                P[u, l, a, target] = 1.0
    return RecipientModel(P, R, horizon, int(L0), 0, name=f"walk(L0={L0}, r0={r0:.4f})")


def gen_walk_recipient(seed, horizon: int = HORIZON) -> RecipientModel:
    """``L0`` uniform on 1..8, ``r0`` uniform on [0, 10)."""
    rng = streams(seed, ("L0", "r0"))
    L0 = int(rng["L0"].integers(1, N_LOC - 1))
    r0 = float(rng["r0"].uniform(0.0, 10.0))
    return walk_recipient(L0, r0, horizon)
