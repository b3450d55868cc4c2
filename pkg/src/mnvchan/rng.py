"""Counter-based random streams keyed by (seed, label, ...).

Every stochastic quantity draws from its own Philox stream so results do not
depend on evaluation order or on how work is split across workers.
"""

import zlib

import numpy as np


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def stream(seed, *labels):
    entropy = [_key(seed)] + [_key(p) for p in labels]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
