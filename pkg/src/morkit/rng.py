"""Deterministic random-number streams.

Every experiment draws from one master seed; independent components
(training sampling, test sets, regression splits, ...) get named
sub-streams so that changing one component's draws never shifts another's.
"""

import hashlib

import numpy as np


def substream(seed, name):
    """A generator seeded by ``(seed, name)``, stable across runs and platforms."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    tag = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))
