"""Named counter-based random streams (Philox) for reproducible generation.

Every consumer asks for a stream by (seed, *names); the same request always
yields the same platform-independent bit stream, and distinct names give
statistically independent streams.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, *names) -> np.random.Generator:
    h = hashlib.blake2b(digest_size=16)
    h.update(int(seed).to_bytes(8, "little", signed=False))
    for name in names:
        h.update(b"/")
        h.update(str(name).encode("utf-8"))
    key = int.from_bytes(h.digest(), "little")
    return np.random.Generator(np.random.Philox(key=key))
