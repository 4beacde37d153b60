"""Deterministic, order-independent random streams.

Every random decision in a campaign draws from its own named substream so
that results do not depend on scheduling or worker count. A substream is
addressed by the campaign master seed plus a tuple of parts (seed id,
method name, purpose, candidate index, ...). Integer parts are used as
is; any other part is hashed through sha256 and its first eight bytes
taken as a big-endian integer. The generator is counter-based (Philox),
so independent streams are cheap.
"""

from __future__ import annotations

import hashlib

import numpy as np


def part_key(part) -> int:
    """Stable non-negative integer key for one substream address part."""
    if isinstance(part, (bool, np.bool_)):
        part = int(part)
    if isinstance(part, (int, np.integer)):
        part = int(part)
        if part >= 0:
            return part
        return int.from_bytes(hashlib.sha256(str(part).encode("utf-8")).digest()[:8], "big")
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def substream(master_seed: int, *parts) -> np.random.Generator:
    """Generator for the substream addressed by (master_seed, *parts)."""
    seq = np.random.SeedSequence(int(master_seed), spawn_key=tuple(part_key(p) for p in parts))
    return np.random.Generator(np.random.Philox(seq))
