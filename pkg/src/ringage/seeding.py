"""Deterministic seed derivation.

Every random stream is keyed by ``(domain, *key)`` under the master seed
through :class:`numpy.random.SeedSequence`, whose spawn keys are hashed
together with the entropy. Distinct keys therefore never share a stream,
and nothing depends on the order in which streams are created.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

STREAMS = 0
EDGE_JITTER = 1
RESERVOIR = 2
MONTE_CARLO = 3

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) <= MAX_SEED:
        raise ConfigError(f"seed must be in [0, 2**64), got {seed}")
    return int(seed)


def derive_rng(seed: int, domain: int, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=check_seed(seed), spawn_key=(domain, *(int(k) for k in key)))
    return np.random.Generator(np.random.PCG64(seq))
