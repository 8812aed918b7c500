"""Counter-based random streams: one independent domain per purpose, keyed by integers."""

import numpy as np

FD_STEPS = 1
REAL_BATCH = 2
DP_NOISE = 3


def keyed_rng(domain, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key], spawn_key=(domain,)))
