"""Breakpoints of one synthetic provider and the best commitment for one walker.

    python demos/01_commitment_curve.py [seed]
"""

import sys

import numpy as np

from commitkit.breakpoints import build_commitment_set, centralized_optimal_commitment
from commitkit.domains import gen_synthetic_provider, gen_walk_recipient
from commitkit.provider import commitment_lp, max_feasible_probability
from commitkit.recipient import value_curve

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 2
provider = gen_synthetic_provider(seed)
walker = gen_walk_recipient(seed)
print(walker.name)

T = 3
p_max = max_feasible_probability(provider, T)
ps = np.linspace(0, p_max, 6)
print(f"T={T}  p_max={p_max:.4f}")
print("  p       v_p(T,p)  v_r(T,p)")
for p, vp, vr in zip(ps, commitment_lp(provider, T).values(ps), value_curve(walker, T, ps)):
    print(f"  {p:.4f}  {vp:8.4f}  {vr:8.4f}")

disc = build_commitment_set(provider, "breakpoints")
even = build_commitment_set(provider, "even(10)")
print(f"breakpoints per T: {disc.mean_size():.1f}   even(10) per T: {even.mean_size():.1f}")

c, v = centralized_optimal_commitment(provider, walker, discretization=disc)
print(f"best commitment T={c.T} p={c.p:.4f}  joint value {v:.4f}")
