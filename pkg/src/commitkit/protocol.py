"""In-process query/response exchange between a provider and a recipient.

The two sides only see each other's JSON messages. The provider annotates each
query entry with its own commitment value; the recipient adds its value for
each entry and answers with the index of the largest sum (smallest on ties).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import provider as prov
from . import recipient as rec
from .breakpoints import Discretization, EvaluatedCommitmentSet, build_commitment_set
from .provider import Commitment, ProviderModel, commitment_lp
from .query import Belief, greedy_query, posterior, select_index
from .recipient import RecipientModel

WIRE_VERSION = 1


def _dumps(msg: dict) -> str:
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


def query_message(entries: list[tuple[Commitment, float]]) -> str:
    return _dumps({"type": "query", "v": WIRE_VERSION, "entries": [
        {"T": c.T, "p": c.p, "u_c": c.feature_id, "v_p": float(v)} for c, v in entries]})


def response_message(index: int) -> str:
    return _dumps({"type": "response", "v": WIRE_VERSION, "index": int(index)})


def parse_message(text: str, kind: str) -> dict:
    msg = json.loads(text)
    if msg.get("type") != kind or msg.get("v") != WIRE_VERSION:
        raise ValueError(f"expected a v{WIRE_VERSION} {kind} message")
    return msg


def parse_query(text: str) -> list[tuple[Commitment, float]]:
    msg = parse_message(text, "query")
    if not msg["entries"]:
        raise ValueError("empty query")
    return [(Commitment(int(e["T"]), float(e["p"]), int(e["u_c"])), float(e["v_p"]))
            for e in msg["entries"]]


def recipient_values(entries: list[tuple[Commitment, float]], recipient: RecipientModel):
    out = np.empty(len(entries))
    for i, (c, _) in enumerate(entries):
        p = c.p if c.feature_id == recipient.feature_id else 0.0
        out[i] = rec.value_curve(recipient, c.T, [p])[0]
    return out


def respond(entries: list[tuple[Commitment, float]], recipient: RecipientModel) -> int:
    """Recipient side: index of the largest annotated sum."""
    if not entries:
        raise ValueError("empty query")
    sums = np.array([v for _, v in entries]) + recipient_values(entries, recipient)
    return int(select_index(sums))


@dataclass
class Transcript:
    query: str
    recipient_values: list[float]
    response: str
    agreed: Commitment
    message_bytes: dict = field(default_factory=dict)

    @property
    def response_index(self) -> int:
        return int(json.loads(self.response)["index"])

    def to_dict(self) -> dict:
        return {"query": json.loads(self.query), "recipient_values": self.recipient_values,
                "response": json.loads(self.response), "agreed": self.agreed.to_dict(),
                "message_bytes": self.message_bytes}


@dataclass
class ExchangeResult:
    transcripts: list[Transcript]
    agreed: Commitment
    provider_policy: list
    recipient_policy: list
    provider_value: float
    recipient_value: float
    beliefs: list[Belief]

    @property
    def joint_value(self) -> float:
        return self.provider_value + self.recipient_value


class RecipientSide:
    """Holds the true recipient model; sees nothing but query messages."""

    def __init__(self, model: RecipientModel):
        self.model = model

    def handle(self, text: str) -> tuple[str, list[float]]:
        entries = parse_query(text)
        vals = recipient_values(entries, self.model)
        idx = int(select_index(np.array([v for _, v in entries]) + vals))
        return response_message(idx), vals.tolist()


class ProviderSide:
    """Holds the provider model, the belief and the candidate evaluations."""

    def __init__(self, model: ProviderModel, belief: Belief, ev: EvaluatedCommitmentSet):
        self.model = model
        self.belief = belief
        self.ev = ev
        self.last_query: list[Commitment] = []

    def pose(self, k: int) -> str:
        q = greedy_query(self.belief, self.ev.commitments, k, self.ev)
        self.last_query = list(q)
        vp = self.ev.provider_values[self.ev.indices(self.last_query)]
        return query_message(list(zip(self.last_query, vp)))

    def receive(self, text: str, update: bool) -> Commitment:
        idx = int(parse_message(text, "response")["index"])
        agreed = self.last_query[idx]
        if update:
            self.belief = posterior(self.belief, self.last_query, idx, self.ev)
        return agreed


def run_exchange(provider: ProviderModel, belief: Belief, ev: EvaluatedCommitmentSet,
                 true_recipient: RecipientModel, k: int, rounds: int = 1) -> ExchangeResult:
    """Greedy query per round, posterior update between rounds.

    The agreed commitment is the last response. The posterior update raises
    :class:`InconsistentResponse` when the true recipient answers unlike every
    candidate of the belief.
    """
    if rounds not in (1, 2):
        raise ValueError("rounds must be 1 or 2")
    check = rec.check_assumption_u(true_recipient)
    if not check.holds:
        warnings.warn(f"true recipient violates the plus-dominance assumption "
                      f"(gap {check.worst_gap:.3g})")
    p_side = ProviderSide(provider, belief, ev)
    r_side = RecipientSide(true_recipient)
    transcripts, beliefs = [], [belief]
    agreed = None
    for r in range(rounds):
        q = p_side.pose(k)
        resp, vals = r_side.handle(q)
        agreed = p_side.receive(resp, update=r + 1 < rounds)
        if r + 1 < rounds:
            beliefs.append(p_side.belief)
        transcripts.append(Transcript(q, vals, resp, agreed,
                                      {"query": len(q.encode()), "response": len(resp.encode())}))
    vp, pi_p = prov.commitment_value(provider, agreed)
    c_r = agreed if agreed.feature_id == true_recipient.feature_id else Commitment(agreed.T, 0.0)
    vr, pi_r = rec.commitment_value(true_recipient, c_r)
    return ExchangeResult(transcripts, agreed, pi_p, pi_r, vp, vr, beliefs)


def default_commitments(provider: ProviderModel, feature_ids=(0,),
                        kind="breakpoints") -> list[Commitment]:
    out: list[Commitment] = []
    for fid in feature_ids:
        disc: Discretization = build_commitment_set(provider, kind, fid)
        out.extend(disc.commitments())
    return sorted(set(out))


def annotation_matches(provider: ProviderModel, text: str, atol: float = 1e-9) -> bool:
    """Check that every annotation equals a fresh provider LP solve."""
    for c, v in parse_query(text):
        fresh = commitment_lp(provider, c.T, c.feature_id).solve(c.p, warm=False)[0]
        if abs(fresh - v) > atol * max(1.0, abs(v)):
            return False
    return True
