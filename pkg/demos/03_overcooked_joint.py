"""Chef and waiter: commitment value against the centralized planner and a random promise.

    python demos/03_overcooked_joint.py [seed]
"""

import sys

import numpy as np

from commitkit.breakpoints import centralized_optimal_commitment
from commitkit.domains import joint
from commitkit.domains.overcooked import gen_overcooked_pair

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
chef, (waiter,) = gen_overcooked_pair(seed)
print(waiter.name)
print("chef states per stage:", max(chef.mdp.n_states))

c, v = centralized_optimal_commitment(chef, waiter)
top = joint.joint_optimal_value(chef, waiter)
null = joint.null_value(chef, waiter)
done = joint.evaluate_joint_execution(chef, waiter, c)
rng = np.random.default_rng(seed)
rand = np.mean([joint.evaluate_joint_execution(
    chef, waiter, joint.random_commitment(chef, waiter.feature_id, rng)) for _ in range(10)])


def norm(x):
    return 100 * (x - null) / (top - null)


print(f"commitment T={c.T} p={c.p:.3f}  planned {v:.3f}  executed {done:.3f}")
print(f"mmdp {top:.3f}  null {null:.3f}")
print(f"normalized: optimal c {norm(done):.1f}  random c {norm(rand):.1f}")
