"""Deterministic per-module seed derivation.

All randomness in the package flows from a single user-facing seed. Each
consumer (data shuffling, mask sampling, text sampling, ...) derives its own
stream by stable hashing of the seed plus a name path, so adding or removing
one consumer never perturbs the others.
"""

from __future__ import annotations

import hashlib


def derive_seed(seed: int, *names: str) -> int:
    """Derive a child seed from ``seed`` and a name path.

    Stable across processes and Python versions (sha256, not ``hash()``).
    Returns a non-negative int that fits in 63 bits.
    """
    h = hashlib.sha256()
    h.update(str(int(seed)).encode("utf-8"))
    for name in names:
        h.update(b"\x00")
        h.update(name.encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little") & 0x7FFF_FFFF_FFFF_FFFF
