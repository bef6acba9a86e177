"""Seeded random streams.

Every generator draws from numpy's PCG64 bit generator. A model seed is turned
into a :class:`numpy.random.SeedSequence` and one child stream is spawned per
named field, in the fixed order given by the caller, so adding a field at the
end never perturbs the draws of the earlier ones.
"""

from __future__ import annotations

import numpy as np


def streams(seed, fields: tuple[str, ...]) -> dict[str, np.random.Generator]:
    entropy = list(seed) if isinstance(seed, (tuple, list)) else [int(seed)]
    children = np.random.SeedSequence(entropy).spawn(len(fields))
    return {f: np.random.Generator(np.random.PCG64(c)) for f, c in zip(fields, children)}


def derive_seed(*path: int) -> int:
    """Stable 63-bit integer seed from a path of integers (e.g. base seed, instance, role)."""
    state = np.random.SeedSequence([int(p) for p in path]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))
