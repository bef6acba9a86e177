"""Commitment-space discretisations and the centralised optimal-commitment search."""

from __future__ import annotations

import re
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import recipient as rec
from .provider import (FEAS_SLACK, Commitment, ProviderModel, commitment_lp,
                       max_feasible_probability)
from .recipient import RecipientModel

DEDUP_RES = 1e-12
DP_CAP = 1_000_000


class CapExceeded(RuntimeError):
    """Deterministic-policy enumeration hit its cap; ``partial`` holds what was collected."""

    def __init__(self, message: str, partial: "Discretization"):
        super().__init__(message)
        self.partial = partial


@dataclass
class Discretization:
    """Sorted candidate probabilities per commitment time for one feature."""

    kind: str
    per_T: dict[int, np.ndarray]
    feature_id: int = 0
    truncated: bool = False

    def commitments(self) -> list[Commitment]:
        return [Commitment(T, float(p), self.feature_id)
                for T in sorted(self.per_T) for p in self.per_T[T]]

    def sizes(self) -> np.ndarray:
        return np.array([len(self.per_T[T]) for T in sorted(self.per_T)])

    def mean_size(self) -> float:
        return float(self.sizes().mean())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "feature_id": self.feature_id, "truncated": self.truncated,
                "per_T": {str(T): [float(p) for p in ps] for T, ps in sorted(self.per_T.items())}}

    @classmethod
    def from_dict(cls, d: dict) -> "Discretization":
        return cls(d["kind"], {int(T): np.array(ps) for T, ps in d["per_T"].items()},
                   int(d.get("feature_id", 0)), bool(d.get("truncated", False)))


def dedup(ps, res: float = DEDUP_RES) -> np.ndarray:
    ps = np.sort(np.asarray(ps, dtype=float))
    if ps.size == 0:
        return ps
    keep = np.concatenate([[True], np.diff(ps) > res])
    return ps[keep]


def parse_kind(kind) -> tuple[str, dict]:
    """``"breakpoints"``, ``"even(10)"``, ``"dp(20)"`` -> (name, params)."""
    if isinstance(kind, tuple):
        return kind
    m = re.fullmatch(r"\s*(\w+)\s*(?:\(\s*([^)]*)\))?\s*", kind)
    if not m:
        raise ValueError(f"bad discretization kind {kind!r}")
    name, arg = m.group(1), m.group(2)
    if name == "breakpoints":
        params = {}
        if arg:
            for part in arg.split(","):
                k, v = part.split("=")
                params[k.strip()] = float(v)
        return name, params
    if name in ("even", "dp"):
        if not arg:
            raise ValueError(f"{name} needs a resolution, e.g. {name}(10)")
        return name, {"n": int(arg)}
    raise ValueError(f"unknown discretization kind {name!r}")


def find_breakpoints(model: ProviderModel, T: int, tol: float = 1e-6,
                     min_width: float | None = None, feature_id: int = 0,
                     values: dict | None = None) -> np.ndarray:
    """Binary search for the linearity breakpoints of ``v^p(T, .)``.

    Intervals are processed first-in first-out starting from ``[0, p_max]``.
    Both endpoints of every popped interval are kept; an interval is split at
    its midpoint unless the midpoint value matches the chord within
    ``tol * max(1, |v(p_l)|)``. Intervals narrower than ``min_width`` (default
    ``p_max / 2**20``) are kept without splitting. ``values`` (optional) is
    filled with every evaluated ``p -> v^p(T, p)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    p_max = max_feasible_probability(model, T, feature_id)
    if p_max <= FEAS_SLACK:
        if values is not None:
            values[0.0] = commitment_lp(model, T, feature_id).solve(0.0)[0]
        return np.array([0.0])
    if min_width is None:
        min_width = p_max / 2 ** 20
    if min_width <= 0:
        raise ValueError("min_width must be positive")
    lp = commitment_lp(model, T, feature_id)
    cache = {} if values is None else values
    for p in (0.0, p_max):
        cache[p] = lp.solve(p, occupancy=False)[0]
    found = set()
    queue = deque([(0.0, p_max)])
    while queue:
        lo, hi = queue.popleft()
        found.update((lo, hi))
        if hi - lo < min_width:
            continue
        mid = 0.5 * (lo + hi)
        if mid not in cache:
            cache[mid] = lp.solve(mid, occupancy=False)[0]
        v_lo, v_hi, v_mid = cache[lo], cache[hi], cache[mid]
        if abs(v_mid - 0.5 * (v_lo + v_hi)) > tol * max(1.0, abs(v_lo)):
            queue.append((lo, mid))
            queue.append((mid, hi))
    return dedup(list(found))


def even_points(p_max: float, n: int) -> np.ndarray:
    grid = np.arange(n + 1) / n
    return grid[grid <= p_max + FEAS_SLACK]


def dp_points(model: ProviderModel, T: int, n: int, feature_id: int = 0,
              cap: int = DP_CAP, batch: int = 4096) -> tuple[np.ndarray, bool]:
    """Plus-masses of :func:`dp_masses` grouped at resolution ``1/n``."""
    masses, truncated = dp_masses(model, T, feature_id, cap, batch)
    return group_points(masses, n), truncated


def dp_masses(model: ProviderModel, T: int, feature_id: int = 0,
              cap: int = DP_CAP, batch: int = 4096) -> tuple[np.ndarray, bool]:
    """Sorted plus-masses at ``T`` of enumerated deterministic policies (cached per model).

    Only decisions that can change the mass at ``T`` are enumerated: stages
    before ``T``, states reachable from the start and not already plus, and one
    representative per group of actions with identical transition rows. The
    enumeration order is lexicographic over decision points sorted by (stage,
    state), with the latest decision varying fastest. Returns ``(points,
    truncated)``.
    """
    key = (T, feature_id, cap)
    if key not in model._dp_cache:
        model._dp_cache[key] = _enumerate_masses(model, T, feature_id, cap, batch)
    return model._dp_cache[key]


def _enumerate_masses(model, T, feature_id, cap, batch):
    m = model.mdp
    dense = [m.dense_transitions(h) for h in range(T)]
    reach = np.zeros(m.n_states[0], dtype=bool)
    reach[m.initial_state] = True
    choices = []  # per stage: list of (state, distinct actions)
    for h in range(T):
        plus = model.plus(feature_id, h)
        stage = []
        for s in np.flatnonzero(reach):
            acts = []
            seen = []
            for a in np.flatnonzero(m.mask(h)[s]):
                row = dense[h][s, a]
                if not any(np.array_equal(row, r) for r in seen):
                    seen.append(row)
                    acts.append(int(a))
            stage.append((int(s), acts if not plus[s] else acts[:1]))
        choices.append(stage)
        reach = (dense[h][reach].reshape(-1, m.n_states[h + 1]) > 0).any(axis=0)

    points = [(h, s, acts) for h, stage in enumerate(choices) for s, acts in stage
              if len(acts) > 1]
    default = [np.zeros(m.n_states[h], dtype=np.int64) for h in range(T)]
    for h, stage in enumerate(choices):
        for s, acts in stage:
            default[h][s] = acts[0]
    total = 1
    for _, _, acts in points:
        total *= len(acts)
    count = min(total, cap)
    truncated = total > cap

    plus_T = model.plus(feature_id, T)
    radices = [len(acts) for _, _, acts in points]
    # decision points whose digit is 0 for every enumerated index keep the
    # default action, so the distribution up to the first varying one is shared
    suffix = 1
    fixed_upto = len(points)
    for j in reversed(range(len(points))):
        if suffix >= count:
            break
        fixed_upto = j
        suffix *= radices[j]
    h0 = points[fixed_upto][0] if fixed_upto < len(points) else T
    d0 = np.zeros(m.n_states[0])
    d0[m.initial_state] = 1.0
    for h in range(h0):
        d0 = d0 @ dense[h][np.arange(m.n_states[h]), default[h]]
    live = [(j, pt) for j, pt in enumerate(points) if j >= fixed_upto]
    masses = []
    widest = max(m.n_states[h] * m.n_states[h + 1] for h in range(T))
    batch = max(1, min(batch, 2_000_000 // widest))
    for start in range(0, count, batch):
        idx = np.arange(start, min(count, start + batch))
        digits = np.zeros((idx.size, len(points)), dtype=np.int64)
        rem = idx.copy()
        for j in reversed(range(fixed_upto, len(points))):
            digits[:, j] = rem % radices[j]
            rem //= radices[j]
        d = np.broadcast_to(d0, (idx.size, d0.size))
        for h in range(h0, T):
            act = np.broadcast_to(default[h], (idx.size, m.n_states[h])).copy()
            for j, (ph, s, acts) in live:
                if ph == h:
                    act[:, s] = np.asarray(acts)[digits[:, j]]
            rows = dense[h][np.arange(m.n_states[h])[None, :], act]  # (B, n_h, n_next)
            d = np.einsum("bs,bsn->bn", d, rows)
        masses.append(d[:, plus_T].sum(axis=1))
    masses = np.sort(np.concatenate(masses)) if masses else np.array([0.0])
    return masses, truncated


def group_points(values, n: int) -> np.ndarray:
    """Keep the smallest value of each run of sorted values lying within ``1/n`` of it."""
    out = []
    for v in np.sort(np.asarray(values, dtype=float)):
        if not out or v - out[-1] > 1.0 / n:
            out.append(float(v))
    return np.array(out)


def build_commitment_set(model: ProviderModel, kind="breakpoints", feature_id: int = 0,
                         cap: int = DP_CAP) -> Discretization:
    """Per-time probability sets of kind ``breakpoints``, ``even(n)`` or ``dp(n)``.

    ``dp(n)`` raises :class:`CapExceeded` when the enumeration is truncated; the
    exception carries the partial discretization.
    """
    name, params = parse_kind(kind)
    H = model.horizon
    per_T = {}
    truncated = False
    for T in range(1, H + 1):
        p_max = max_feasible_probability(model, T, feature_id)
        if name == "breakpoints":
            per_T[T] = find_breakpoints(model, T, feature_id=feature_id, **params)
        elif name == "even":
            per_T[T] = even_points(p_max, params["n"])
        else:
            pts, trunc = dp_points(model, T, params["n"], feature_id, cap)
            per_T[T] = dedup(np.clip(pts, 0.0, p_max))
            truncated |= trunc
    label = kind if isinstance(kind, str) else f"{name}({params})"
    disc = Discretization(label, per_T, feature_id, truncated)
    if truncated:
        raise CapExceeded(f"{label}: deterministic-policy enumeration capped at {cap}", disc)
    return disc


@dataclass
class EvaluatedCommitmentSet:
    """Provider values and per-candidate recipient values of an ordered commitment list."""

    commitments: list[Commitment]
    provider_values: np.ndarray
    recipient_values: np.ndarray  # (N, n)
    _index: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.commitments = list(self.commitments)
        self.provider_values = np.asarray(self.provider_values, dtype=float)
        self.recipient_values = np.atleast_2d(np.asarray(self.recipient_values, dtype=float))
        if self.recipient_values.shape[1] != len(self.commitments):
            raise ValueError("recipient values must cover every commitment")
        if not (np.isfinite(self.provider_values).all()
                and np.isfinite(self.recipient_values).all()):
            raise ValueError("commitment values must be finite")
        self._index = {c: i for i, c in enumerate(self.commitments)}

    @property
    def joint(self) -> np.ndarray:
        """``v^p + v^r_i`` with shape (N, n)."""
        return self.provider_values[None, :] + self.recipient_values

    @property
    def n_candidates(self) -> int:
        return self.recipient_values.shape[0]

    def __len__(self):
        return len(self.commitments)

    def index(self, c: Commitment) -> int:
        try:
            return self._index[c]
        except KeyError:
            raise KeyError(f"{c} has not been evaluated") from None

    def indices(self, cs: Sequence[Commitment]) -> np.ndarray:
        return np.array([self.index(c) for c in cs], dtype=np.int64)

    def subset(self, cs: Sequence[Commitment]) -> "EvaluatedCommitmentSet":
        idx = self.indices(cs)
        return EvaluatedCommitmentSet([self.commitments[i] for i in idx],
                                      self.provider_values[idx], self.recipient_values[:, idx])

    def to_dict(self) -> dict:
        return {"commitments": [c.to_dict() for c in self.commitments],
                "provider_values": self.provider_values.tolist(),
                "recipient_values": self.recipient_values.tolist()}


def commitment_union(discretizations: Sequence[Discretization]) -> list[Commitment]:
    out = set()
    for d in discretizations:
        out.update(d.commitments())
    return sorted(out)


def evaluate_commitments(provider: ProviderModel, recipients: Sequence[RecipientModel],
                         commitments: Sequence[Commitment],
                         provider_cache: dict | None = None) -> EvaluatedCommitmentSet:
    """Evaluate every commitment for the provider and every candidate recipient.

    A candidate whose feature id differs from the commitment's treats it as the
    null commitment (its value does not depend on the promise).
    """
    commitments = sorted(set(commitments))
    vp = np.empty(len(commitments))
    for i, c in enumerate(commitments):
        key = (c.T, c.p, c.feature_id)
        if provider_cache is not None and key in provider_cache:
            vp[i] = provider_cache[key]
        else:
            vp[i] = commitment_lp(provider, c.T, c.feature_id).solve(c.p, occupancy=False)[0]
    vr = np.empty((len(recipients), len(commitments)))
    groups = {}
    for i, c in enumerate(commitments):
        groups.setdefault((c.feature_id, c.T), []).append(i)
    for j, r in enumerate(recipients):
        for (fid, T), idx in groups.items():
            ps = np.array([commitments[i].p for i in idx])
            if fid != r.feature_id:
                ps = np.zeros_like(ps)
            vr[j, idx] = rec.value_curve(r, T, ps)
    return EvaluatedCommitmentSet(commitments, vp, vr)


def centralized_optimal_commitment(provider: ProviderModel, recipient: RecipientModel,
                                   tol: float = 1e-6, min_width: float | None = None,
                                   discretization: Discretization | None = None):
    """Best commitment for a known recipient, searched over the provider's breakpoints.

    Returns ``(commitment, joint value)``; ties go to the smallest (T, p).
    """
    check = rec.check_assumption_u(recipient)
    if not check.holds:
        warnings.warn(f"recipient violates the plus-dominance assumption (gap {check.worst_gap:.3g})")
    fid = recipient.feature_id
    if discretization is None:
        per_T = {T: find_breakpoints(provider, T, tol, min_width, fid)
                 for T in range(1, provider.horizon + 1)}
        discretization = Discretization("breakpoints", per_T, fid)
    ev = evaluate_commitments(provider, [recipient], discretization.commitments())
    joint = ev.joint[0]
    i = int(np.argmax(joint))
    return ev.commitments[i], float(joint[i])


def even_grid_commitments(provider: ProviderModel, n: int, feature_id: int = 0):
    return [Commitment(T, float(p), feature_id) for T in range(1, provider.horizon + 1)
            for p in even_points(max_feasible_probability(provider, T, feature_id), n)]
