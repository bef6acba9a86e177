"""Experiment harness: seeded instances, the studies behind each table, tidy rows.

Every study returns ``(rows, timings)``. ``rows`` depend only on the config and
the seed; wall-clock measurements go to ``timings`` (keyed by the same row id)
so the main table stays reproducible bit for bit.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import partial

import numpy as np

from . import query as Q
from .breakpoints import (DP_CAP, CapExceeded, Discretization, EvaluatedCommitmentSet,
                          build_commitment_set, evaluate_commitments)
from .domains import joint as J
from .domains.overcooked import gen_overcooked_pair
from .domains.rng import derive_seed, streams
from .domains.synthetic import gen_synthetic_provider
from .domains.walk import gen_walk_recipient
from .protocol import run_exchange
from .provider import ProviderModel
from .recipient import RecipientModel

log = logging.getLogger(__name__)

DEFAULT_KINDS = ("breakpoints", "even(10)", "even(20)", "even(50)", "dp(10)", "dp(20)", "dp(50)")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    domain: str = "synthetic"
    n_instances: int = 20
    n_candidates: int = 10
    ks: list = field(default_factory=lambda: [1, 2, 5])
    kinds: list = field(default_factory=lambda: list(DEFAULT_KINDS))
    prior: str = "uniform"
    priors: list = field(default_factory=lambda: ["uniform"])
    rounds: int = 1
    k0s: list = field(default_factory=lambda: [2, 5])
    m: int = 1
    horizon: int = 20
    exhaustive_budget: int = Q.EXHAUSTIVE_BUDGET
    random_samples: int = 10
    dp_cap: int = DP_CAP
    methods: list = field(default_factory=lambda: ["optimal", "greedy"])

    def __post_init__(self):
        if self.domain not in ("synthetic", "overcooked"):
            raise ConfigError(f"unknown domain {self.domain!r}")
        if self.n_instances < 1 or self.n_candidates < 1:
            raise ConfigError("need at least one instance and one candidate")
        if self.rounds not in (1, 2):
            raise ConfigError("rounds must be 1 or 2")
        if any(int(k) < 1 for k in list(self.ks) + list(self.k0s)):
            raise ConfigError("query sizes must be positive")
        for kind in self.kinds:
            from .breakpoints import parse_kind
            try:
                parse_kind(kind)
            except ValueError as e:
                raise ConfigError(str(e)) from None
        for p in [self.prior, *self.priors]:
            if p not in ("uniform", "random", "gaussian"):
                raise ConfigError(f"unknown prior {p!r}")
        if self.domain == "synthetic" and self.m != 1:
            raise ConfigError("the synthetic domain has a single feature")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


# --- instances ---------------------------------------------------------------

@dataclass(eq=False)
class Instance:
    index: int
    seed: int
    provider: ProviderModel
    recipients: list[RecipientModel]
    params: dict
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def features(self) -> list[int]:
        return sorted(self.provider.plus_states)


def make_instance(cfg: ExperimentConfig, seed: int, i: int) -> Instance:
    s = derive_seed(seed, i)
    N, H = cfg.n_candidates, cfg.horizon
    if cfg.domain == "synthetic":
        provider = gen_synthetic_provider(derive_seed(s, 0), horizon=H)
        recipients = [gen_walk_recipient(derive_seed(s, 1, j), H) for j in range(N)]
    else:
        provider, recipients = gen_overcooked_pair(s, cfg.m, N, H)
    params = {"domain": cfg.domain, "instance": i, "seed": s, "n_candidates": N,
              "horizon": H, "m": cfg.m, "recipients": [r.name for r in recipients]}
    return Instance(i, s, provider, recipients, params)


def fresh_provider(p: ProviderModel) -> ProviderModel:
    """Same model with empty LP caches (for fair timing)."""
    return ProviderModel(p.mdp, {k: list(v) for k, v in p.plus_states.items()})


def discretize(inst: Instance, kind: str, cap: int = DP_CAP,
               provider: ProviderModel | None = None) -> Discretization:
    """Union over features of the per-feature commitment sets (cached on the instance)."""
    key = ("disc", kind, cap)
    if key in inst.cache and provider is None:
        return inst.cache[key]
    model = inst.provider if provider is None else provider
    per_T, truncated = {}, False
    for fid in inst.features:
        try:
            d = build_commitment_set(model, kind, fid, cap)
        except CapExceeded as e:
            d = e.partial
        truncated |= d.truncated
        per_T[fid] = d
    if len(per_T) == 1:
        out = next(iter(per_T.values()))
    else:
        out = MultiDiscretization(kind, per_T, truncated)
    inst.cache[key] = out
    return out


class MultiDiscretization:
    """Per-feature discretizations treated as one commitment set."""

    def __init__(self, kind, parts: dict, truncated: bool):
        self.kind, self.parts, self.truncated = kind, parts, truncated

    def commitments(self):
        return sorted(c for d in self.parts.values() for c in d.commitments())

    def mean_size(self) -> float:
        return float(np.mean([d.mean_size() for d in self.parts.values()]))


def evaluated(inst: Instance, kind: str, cap: int = DP_CAP) -> EvaluatedCommitmentSet:
    key = ("ev", kind, cap)
    if key not in inst.cache:
        disc = discretize(inst, kind, cap)
        inst.cache[key] = evaluate_commitments(inst.provider, inst.recipients, disc.commitments())
    return inst.cache[key]


def timed_discretization(inst: Instance, kind: str, cap: int = DP_CAP):
    """Build and evaluate ``kind`` on a cache-free copy of the provider.

    Returns ``(discretization, evaluations, seconds)``. The first call per kind is
    cached on the instance together with the separate build and evaluation times
    (see :func:`build_seconds`), so later studies reuse the same measurement.
    """
    key = ("timed", kind, cap)
    if key not in inst.cache:
        model = fresh_provider(inst.provider)
        t0 = time.perf_counter()
        disc = discretize(Instance(inst.index, inst.seed, model, inst.recipients, inst.params),
                          kind, cap, provider=model)
        t1 = time.perf_counter()
        ev = evaluate_commitments(model, inst.recipients, disc.commitments())
        t2 = time.perf_counter()
        inst.cache.setdefault(("disc", kind, cap), disc)
        inst.cache.setdefault(("ev", kind, cap), ev)
        inst.cache[key] = (disc, ev, t1 - t0, t2 - t1)
    disc, ev, build, evaluation = inst.cache[key]
    return disc, ev, build + evaluation


def build_seconds(inst: Instance, kind: str, cap: int = DP_CAP) -> float:
    """Construction time alone from the cached :func:`timed_discretization` run."""
    timed_discretization(inst, kind, cap)
    return inst.cache[("timed", kind, cap)][2]


# --- parallel map -------------------------------------------------------------

def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("COMMITKIT_THREADS", "1")))
    except ValueError:
        return 1


def _run(study, cfg_dict, seed, i):
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return study(cfg, make_instance(cfg, seed, i))


def map_instances(study, cfg: ExperimentConfig, seed: int):
    """Run ``study(cfg, instance)`` for every instance; results ordered by instance id."""
    ids = range(cfg.n_instances)
    workers = min(n_workers(), cfg.n_instances)
    if workers == 1:
        out = [study(cfg, make_instance(cfg, seed, i)) for i in ids]
    else:
        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(partial(_run, study, cfg.to_dict(), seed), ids))
    rows, timings = [], []
    for r, t in out:
        rows.extend(r)
        timings.extend(t)
    return rows, timings


def _normalize(x, lo, hi):
    den = hi - lo
    return float((x - lo) / den) if den > 1e-12 else float("nan")


# --- studies ------------------------------------------------------------------

def _query_eus(method, belief, C, ev, k, budget, seed):
    if method == "greedy":
        q = Q.greedy_query(belief, C, k, ev)
    elif method == "optimal":
        q = Q.exhaustive_query(belief, C, k, ev, budget)
    elif method == "random":
        q = Q.random_query(belief, C, k, seed)
    else:
        raise ConfigError(f"unknown query method {method!r}")
    return Q.eus(q, belief, ev)


def discretization_instance(cfg: ExperimentConfig, inst: Instance):
    belief = Q.Belief.uniform(cfg.n_candidates)
    rows, timings = [], []
    evs = {}
    for kind in cfg.kinds:
        disc, ev, secs = timed_discretization(inst, kind, cfg.dp_cap)
        evs[kind] = (disc, ev)
        timings.append({"instance": inst.index, "kind": kind, "build_eval_ms": 1e3 * secs})
    bp = evs["breakpoints"][1] if "breakpoints" in evs else evaluated(inst, "breakpoints")
    e10 = evs["even(10)"][1] if "even(10)" in evs else evaluated(inst, "even(10)")
    upper = Q.eus_upper_bound(belief, bp)
    base = Q.eus(Q.exhaustive_query(belief, e10.commitments, 1, e10), belief, e10)
    for kind, (disc, ev) in evs.items():
        for k in cfg.ks:
            for method in cfg.methods:
                row = {"instance": inst.index, "seed": inst.seed, "kind": kind, "k": k,
                       "method": method, "size": disc.mean_size(),
                       "truncated": bool(disc.truncated), "upper_bound": upper, "baseline": base}
                t0 = time.perf_counter()
                try:
                    v = _query_eus(method, belief, ev.commitments, ev, k, cfg.exhaustive_budget,
                                   derive_seed(inst.seed, 3, k))
                    row.update(eus=v, eus_norm=_normalize(v, base, upper), absent=False)
                except Q.BudgetExceeded:
                    row.update(eus=float("nan"), eus_norm=float("nan"), absent=True)
                timings.append({"instance": inst.index, "kind": kind, "k": k, "method": method,
                                "query_ms": 1e3 * (time.perf_counter() - t0)})
                rows.append(row)
    return rows, timings


def query_instance(cfg: ExperimentConfig, inst: Instance):
    ev = evaluated(inst, "breakpoints", cfg.dp_cap)
    C = ev.commitments
    rows, timings = [], []
    prior_seed = derive_seed(inst.seed, 2)
    for prior in cfg.priors:
        belief = Q.make_prior(prior, cfg.n_candidates, prior_seed)
        upper = Q.eus_upper_bound(belief, ev)
        base = Q.expected_utility(Q.optimal_commitment_under_belief(belief, C, ev), belief, ev)
        for k in cfg.ks:
            for method in ("greedy", "optimal", "random"):
                reps = cfg.random_samples if method == "random" else 1
                t0 = time.perf_counter()
                try:
                    vals = [_query_eus(method, belief, C, ev, k, cfg.exhaustive_budget,
                                       derive_seed(inst.seed, 4, k, r)) for r in range(reps)]
                    v = float(np.mean(vals))
                    absent = False
                except Q.BudgetExceeded:
                    v, absent = float("nan"), True
                timings.append({"instance": inst.index, "prior": prior, "k": k,
                                "method": method, "query_ms": 1e3 * (time.perf_counter() - t0)})
                rows.append({"instance": inst.index, "seed": inst.seed, "prior": prior,
                             "round": 1, "k0": "", "k": k, "method": method, "eus": v,
                             "eus_norm": _normalize(v, base, upper), "upper_bound": upper,
                             "baseline": base, "greedy_bound": 1 - ((k - 1) / k) ** k,
                             "absent": absent})
    if cfg.rounds == 2:
        rows.extend(two_round_rows(cfg, inst, ev))
    return rows, timings


def two_round_rows(cfg: ExperimentConfig, inst: Instance, ev: EvaluatedCommitmentSet):
    C = ev.commitments
    rows = []
    mu0 = Q.make_prior(cfg.prior, cfg.n_candidates, derive_seed(inst.seed, 2))
    true_index = int(streams(derive_seed(inst.seed, 5), ("true",))["true"].choice(
        cfg.n_candidates, p=mu0.weights))
    for k0 in cfg.k0s:
        q0 = Q.greedy_query(mu0, C, k0, ev)
        r = int(Q.selections(q0, ev)[true_index])
        mu1 = Q.posterior(mu0, q0, r, ev)
        upper = Q.eus_upper_bound(mu1, ev)
        base = Q.expected_utility(Q.optimal_commitment_under_belief(mu1, C, ev), mu1, ev)
        first = Q.eus(q0, mu1, ev)
        for k in cfg.ks:
            for method in ("greedy", "optimal"):
                try:
                    v = _query_eus(method, mu1, C, ev, k, cfg.exhaustive_budget, 0)
                    absent = False
                except Q.BudgetExceeded:
                    v, absent = float("nan"), True
                rows.append({"instance": inst.index, "seed": inst.seed, "prior": cfg.prior,
                             "round": 2, "k0": k0, "k": k, "method": method, "eus": v,
                             "eus_norm": _normalize(v, base, upper), "upper_bound": upper,
                             "baseline": base, "greedy_bound": 1 - ((k - 1) / k) ** k,
                             "absent": absent, "first_round_eus": first,
                             "true_index": true_index, "support": int(mu1.support.size)})
    return rows


def joint_instance(cfg: ExperimentConfig, inst: Instance):
    """Joint values for one instance; the true recipient is drawn from the candidates."""
    rng = streams(derive_seed(inst.seed, 6), ("true", "random_c"))
    true_index = int(rng["true"].integers(cfg.n_candidates))
    true = inst.recipients[true_index]
    try:
        mmdp = J.joint_optimal_value(inst.provider, true)
    except J.BudgetExceeded as e:
        log.warning("instance %d skipped: %s", inst.index, e)
        return [], []
    null = J.null_value(inst.provider, true)
    ev = evaluated(inst, "breakpoints", cfg.dp_cap)
    values = {}
    j = ev.joint[true_index]
    c_opt = ev.commitments[int(np.argmax(j))]
    values["optimal_c"] = J.evaluate_joint_execution(inst.provider, true, c_opt)
    belief = Q.Belief.uniform(cfg.n_candidates)
    for k in cfg.ks:
        res = run_exchange(inst.provider, belief, ev, true, k, rounds=1)
        values[f"query_k{k}"] = J.evaluate_joint_execution(inst.provider, true, res.agreed)
    rand = [J.evaluate_joint_execution(
        inst.provider, true, J.random_commitment(inst.provider, true.feature_id, rng["random_c"]))
        for _ in range(cfg.random_samples)]
    values["random_c"] = float(np.mean(rand))
    values["random_policy"] = J.random_policy_value(inst.provider, true)
    values["null"] = null
    values["mmdp"] = mmdp
    rows = []
    for method, v in values.items():
        rows.append({"instance": inst.index, "seed": inst.seed, "true_index": true_index,
                     "method": method, "value": v, "mmdp": mmdp, "null": null,
                     "normalized": 100 * _normalize(v, null, mmdp),
                     "ratio": v / mmdp if abs(mmdp) > 1e-12 else float("nan")})
    return rows, []


def protocol_instance(cfg: ExperimentConfig, inst: Instance):
    ev = evaluated(inst, "breakpoints", cfg.dp_cap)
    belief = Q.make_prior(cfg.prior, cfg.n_candidates, derive_seed(inst.seed, 2))
    true_index = int(streams(derive_seed(inst.seed, 5), ("true",))["true"].choice(
        cfg.n_candidates, p=belief.weights))
    rows = []
    for k in cfg.ks:
        res = run_exchange(inst.provider, belief, ev, inst.recipients[true_index], k, cfg.rounds)
        rows.append({"instance": inst.index, "seed": inst.seed, "k": k, "rounds": cfg.rounds,
                     "true_index": true_index, "T": res.agreed.T, "p": res.agreed.p,
                     "u_c": res.agreed.feature_id, "provider_value": res.provider_value,
                     "recipient_value": res.recipient_value, "joint_value": res.joint_value,
                     "query_bytes": sum(t.message_bytes["query"] for t in res.transcripts),
                     "transcripts": json.dumps([t.to_dict() for t in res.transcripts],
                                               sort_keys=True)})
    return rows, []


STUDIES = {
    "discretize": discretization_instance,
    "query-study": query_instance,
    "joint-value": joint_instance,
    "protocol-sim": protocol_instance,
}


def summarize(rows: list[dict], by: tuple[str, ...], value: str) -> list[dict]:
    """Mean and standard error of ``value`` grouped by the ``by`` columns."""
    groups: dict = {}
    for r in rows:
        v = r.get(value)
        if v is None or (isinstance(v, float) and np.isnan(v)):
            continue
        groups.setdefault(tuple(r[b] for b in by), []).append(float(v))
    out = []
    for key, vals in sorted(groups.items(), key=lambda kv: tuple(map(str, kv[0]))):
        a = np.array(vals)
        se = float(a.std(ddof=1) / np.sqrt(a.size)) if a.size > 1 else 0.0
        out.append({**dict(zip(by, key)), "n": int(a.size), "mean": float(a.mean()), "se": se})
    return out


def generate_corpus(cfg: ExperimentConfig, seed: int, out_dir) -> list[str]:
    """Write ``instances/<domain>/<seed>/{provider,recipient_<i>,params}.json``."""
    from pathlib import Path

    written = []
    for i in range(cfg.n_instances):
        inst = make_instance(cfg, seed, i)
        d = Path(out_dir) / "instances" / cfg.domain / str(inst.seed)
        d.mkdir(parents=True, exist_ok=True)
        (d / "provider.json").write_text(json.dumps(inst.provider.to_dict(), sort_keys=True))
        for j, r in enumerate(inst.recipients):
            (d / f"recipient_{j}.json").write_text(json.dumps(r.to_dict(), sort_keys=True))
        (d / "params.json").write_text(json.dumps(inst.params, sort_keys=True, indent=1))
        written.append(str(d))
    return written
