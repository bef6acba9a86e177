"""Chef (provider) and waiter (recipient) halves of a small Overcooked kitchen.

The 7x7 grid has counters on its border and down the middle column. The chef
walks the left interior (rows 1-5, columns 1-2), the waiter the right interior
(rows 1-5, columns 4-5). The plate is fixed on the middle counter at (3, 3).
Tomatoes, the knife and the pot sit on the chef's outer counters; the delivery
counter and the dine-in customer sit on the waiter's outer counters.

Actions for both agents: 0-3 move N/E/S/W, 4-7 interact N/E/S/W, 8 do nothing.
A move into a counter leaves the agent in place; an interact that matches no
rule is a no-op.

Chef rules: interact with a tomato on its counter while empty-handed picks it
up, with the knife while holding a raw tomato chops it, with the plate while
holding a chopped tomato plates it (feature ``i`` for tomato ``i``, permanent).
Interacting with the boiling pot turns it off. After each action an unboiled
pot starts boiling with probability ``p_boiling``. Reward -1 for every step
that begins with the pot boiling.

Waiter rules: interact with the plate (from (3, 4), facing west) while the
wanted tomato is plated and its hands are empty picks it up; interact with the
delivery counter while carrying delivers it for ``r_delivery``. Every step costs
``r_distance`` times the Manhattan distance to the customer.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from ..mdp import from_stationary
from ..provider import ProviderModel
from ..recipient import MINUS, PLUS, RecipientModel
from .rng import streams

log = logging.getLogger(__name__)

GRID = 7
HORIZON = 20
PLATE = (3, 3)
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))  # N, E, S, W
N_ACTIONS = 9
NOOP = 8
CHEF_CELLS = tuple((r, c) for r in range(1, 6) for c in (1, 2))
WAITER_CELLS = tuple((r, c) for r in range(1, 6) for c in (4, 5))
CHEF_COUNTERS = tuple([(r, 0) for r in range(1, 6)] + [(0, 1), (0, 2), (6, 1), (6, 2)])
WAITER_COUNTERS = tuple([(r, 6) for r in range(1, 6)] + [(0, 4), (0, 5), (6, 4), (6, 5)])

# tomato phases
ON_COUNTER, RAW, CHOPPED, PLATED = 0, 1, 2, 3
# waiter phases
EMPTY, CARRYING, DELIVERED = 0, 1, 2


@dataclass(frozen=True)
class ChefParams:
    start: tuple[int, int]
    tomatoes: tuple[tuple[int, int], ...]
    knife: tuple[int, int]
    pot: tuple[int, int]
    p_boiling: float
    horizon: int = HORIZON


@dataclass(frozen=True)
class WaiterParams:
    start: tuple[int, int]
    delivery: tuple[int, int]
    customer: tuple[int, int]
    r_delivery: float
    r_distance: float
    wants: int = 1
    horizon: int = HORIZON


def _step(pos, a, cells):
    if a >= 4:
        return pos
    nxt = (pos[0] + MOVES[a][0], pos[1] + MOVES[a][1])
    return nxt if nxt in cells else pos


def _facing(pos, a):
    if not 4 <= a < 8:
        return None
    d = MOVES[a - 4]
    return (pos[0] + d[0], pos[1] + d[1])


def item_configs(m: int) -> list[tuple[int, ...]]:
    """Tomato phase tuples with at most one tomato in hand."""
    return [cfg for cfg in itertools.product(range(4), repeat=m)
            if sum(ph in (RAW, CHOPPED) for ph in cfg) <= 1]


def chef_arrays(p: ChefParams):
    """Stationary chef dynamics: ``(P, R, s0, decode)`` with state ``(cell, items, boiling)``."""
    m = len(p.tomatoes)
    cfgs = item_configs(m)
    states = [(cell, cfg, boil) for cell in CHEF_CELLS for cfg in cfgs for boil in (0, 1)]
    sid = {s: i for i, s in enumerate(states)}
    n = len(states)
    P = np.zeros((n, N_ACTIONS, n))
    R = np.zeros((n, N_ACTIONS))
    cells = set(CHEF_CELLS)
    for i, (cell, cfg, boil) in enumerate(states):
        R[i, :] = -1.0 if boil else 0.0
        held = next((j for j, ph in enumerate(cfg) if ph in (RAW, CHOPPED)), None)
        for a in range(N_ACTIONS):
            nc, ncfg, nboil = _step(cell, a, cells), list(cfg), boil
            target = _facing(cell, a)
            if target is not None:
                if held is None and target in p.tomatoes:
                    j = p.tomatoes.index(target)
                    if cfg[j] == ON_COUNTER:
                        ncfg[j] = RAW
                elif held is not None and target == p.knife and cfg[held] == RAW:
                    ncfg[held] = CHOPPED
                elif held is not None and target == PLATE and cfg[held] == CHOPPED:
                    ncfg[held] = PLATED
                if target == p.pot and boil:
                    nboil = 0
            ncfg = tuple(ncfg)
            if nboil:
                P[i, a, sid[(nc, ncfg, 1)]] = 1.0
            else:
                P[i, a, sid[(nc, ncfg, 1)]] += p.p_boiling
                P[i, a, sid[(nc, ncfg, 0)]] += 1.0 - p.p_boiling
    s0 = sid[(p.start, (ON_COUNTER,) * m, 0)]
    return P, R, s0, states


def chef_provider(p: ChefParams) -> ProviderModel:
    """Chef MDP restricted to reachable states; feature ``i`` (1-based) is tomato ``i`` plated."""
    P, R, s0, states = chef_arrays(p)
    mdp, index = from_stationary(P, R, p.horizon, s0, prune=True)
    labels = tuple(tuple(states[i] for i in ids) for ids in index)
    mdp = type(mdp)(mdp.horizon, mdp.n_states, mdp.n_actions, mdp.transitions, mdp.rewards,
                    mdp.initial_state, mdp.action_mask, labels)
    plus = {j + 1: [np.array([states[i][1][j] == PLATED for i in ids]) for ids in index]
            for j in range(len(p.tomatoes))}
    return ProviderModel(mdp, plus)


def waiter_recipient(p: WaiterParams) -> RecipientModel:
    """Waiter model over (cell, phase); picking up from the plate needs u plus."""
    locals_ = [(cell, ph) for cell in WAITER_CELLS for ph in (EMPTY, CARRYING, DELIVERED)]
    lid = {s: i for i, s in enumerate(locals_)}
    L = len(locals_)
    P = np.zeros((2, L, N_ACTIONS, L))
    R = np.zeros((2, L, N_ACTIONS))
    cells = set(WAITER_CELLS)
    for u in (MINUS, PLUS):
        for i, (cell, ph) in enumerate(locals_):
            dist = abs(cell[0] - p.customer[0]) + abs(cell[1] - p.customer[1])
            for a in range(N_ACTIONS):
                R[u, i, a] = -p.r_distance * dist
                nc, nph = _step(cell, a, cells), ph
                target = _facing(cell, a)
                if target == PLATE and ph == EMPTY and u == PLUS:
                    nph = CARRYING
                elif target == p.delivery and ph == CARRYING:
                    nph = DELIVERED
                    R[u, i, a] += p.r_delivery
                P[u, i, a, lid[(nc, nph)]] = 1.0
    name = (f"waiter(start={p.start}, delivery={p.delivery}, customer={p.customer}, "
            f"r_delivery={p.r_delivery:.3f}, r_distance={p.r_distance:.4f}, wants={p.wants})")
    return RecipientModel(P, R, p.horizon, lid[(p.start, EMPTY)], p.wants, name)


def _reachable(start, targets, cells):
    """Every target counter has a walkable neighbour reachable from ``start``."""
    seen, todo = {start}, [start]
    while todo:
        c = todo.pop()
        for d in MOVES:
            nxt = (c[0] + d[0], c[1] + d[1])
            if nxt in cells and nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    adj = lambda t: any((t[0] + d[0], t[1] + d[1]) in seen for d in MOVES)
    return all(adj(t) for t in targets)


def sample_chef(seed, m: int = 1, horizon: int = HORIZON) -> ChefParams:
    rng = streams(seed, ("placement", "start", "p_boiling"))
    counters = list(CHEF_COUNTERS)
    for attempt in itertools.count():
        picks = rng["placement"].choice(len(counters), size=m + 2, replace=False)
        objs = [counters[i] for i in picks]
        start = CHEF_CELLS[int(rng["start"].integers(len(CHEF_CELLS)))]
        if _reachable(start, objs + [PLATE], set(CHEF_CELLS)):
            break
        log.info("chef seed %s: unreachable placement rejected (attempt %d)", seed, attempt)
    p_b = float(rng["p_boiling"].uniform(0.0, 0.1))
    return ChefParams(start, tuple(objs[:m]), objs[m], objs[m + 1], p_b, horizon)


def sample_waiter(seed, m: int = 1, horizon: int = HORIZON) -> WaiterParams:
    rng = streams(seed, ("placement", "start", "r_delivery", "r_distance", "wants"))
    counters = list(WAITER_COUNTERS)
    for attempt in itertools.count():
        picks = rng["placement"].choice(len(counters), size=2, replace=False)
        delivery, customer = counters[picks[0]], counters[picks[1]]
        start = WAITER_CELLS[int(rng["start"].integers(len(WAITER_CELLS)))]
        if _reachable(start, [delivery, PLATE], set(WAITER_CELLS)):
            break
        log.info("waiter seed %s: unreachable placement rejected (attempt %d)", seed, attempt)
    r_del = float(rng["r_delivery"].uniform(5.0, 15.0))
    r_dist = float(rng["r_distance"].uniform(0.0, 0.1))
    wants = int(rng["wants"].integers(1, m + 1))
    return WaiterParams(start, delivery, customer, r_del, r_dist, wants, horizon)


def gen_overcooked_chef(seed, m: int = 1, horizon: int = HORIZON) -> ProviderModel:
    return chef_provider(sample_chef(seed, m, horizon))


def gen_overcooked_waiter(seed, m: int = 1, horizon: int = HORIZON) -> RecipientModel:
    return waiter_recipient(sample_waiter(seed, m, horizon))


def gen_overcooked_pair(seed, m: int = 1, n_waiters: int = 1, horizon: int = HORIZON):
    """Chef model and ``n_waiters`` waiter candidates drawn from derived seeds."""
    from .rng import derive_seed

    if m < 1:
        raise ValueError("need at least one food item")
    chef = gen_overcooked_chef(derive_seed(seed, 0), m, horizon)
    waiters = [gen_overcooked_waiter(derive_seed(seed, 1, i), m, horizon)
               for i in range(n_waiters)]
    return chef, waiters
