"""Keyed, counter-based random streams.

Every draw in the package comes from ``stream(seed, *labels)``: a Philox
generator whose key is derived from the root seed and a tuple of labels
(strings or ints). Two streams with different labels are independent, and a
stream never depends on how many other streams were created before it, so
results do not change with worker count or scheduling order.
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_code(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("integer stream labels must be non-negative")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8")) + (1 << 40)


def stream(seed: int, *labels) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_label_code(x) for x in labels))
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, dtype=np.uint64)))


def int_seed(seed: int, *labels) -> int:
    """A 31-bit integer seed for libraries that take ``random_state=int``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_label_code(x) for x in labels))
    return int(ss.generate_state(1, dtype=np.uint32)[0] >> 1)
