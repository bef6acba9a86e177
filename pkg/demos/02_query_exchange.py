"""Provider unsure which of ten walkers it faces: greedy queries and one exchange.

    python demos/02_query_exchange.py [seed]
"""

import json
import sys

from commitkit import query as Q
from commitkit.breakpoints import evaluate_commitments
from commitkit.domains import gen_synthetic_provider, gen_walk_recipient
from commitkit.protocol import default_commitments, run_exchange

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
H = 10
provider = gen_synthetic_provider(seed, horizon=H)
walkers = [gen_walk_recipient((seed, j), horizon=H) for j in range(10)]
C = default_commitments(provider)
ev = evaluate_commitments(provider, walkers, C)
mu = Q.Belief.uniform(len(walkers))

print(f"{len(C)} breakpoint commitments, upper bound {Q.eus_upper_bound(mu, ev):.4f}")
for k in (1, 2, 3, 5):
    g = Q.eus(Q.greedy_query(mu, C, k, ev), mu, ev)
    x = Q.eus(Q.exhaustive_query(mu, C, k, ev), mu, ev)
    print(f"k={k}  greedy {g:.4f}  exhaustive {x:.4f}")

res = run_exchange(provider, mu, ev, walkers[3], k=3)
t = res.transcripts[0]
print("query  ", t.query)
print("answer ", t.response, " recipient values", [round(v, 3) for v in t.recipient_values])
print(f"agreed T={res.agreed.T} p={res.agreed.p:.4f}  joint value {res.joint_value:.4f}")
print(json.dumps(t.message_bytes))
