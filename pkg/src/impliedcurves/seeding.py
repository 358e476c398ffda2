"""Deterministic derivation of per-slice RNG seeds.

Every stochastic step keys its RNG off the master seed mixed with the
identifying labels of the piece of work (timestamp, expiry, a tag string).
Results then depend only on the data and the master seed, never on the
order in which slices happen to be processed.
"""
from __future__ import annotations

import hashlib
from datetime import datetime


def mix_seed(master: int, *parts: object) -> int:
    """Derive a 64-bit seed from a master seed and identifying labels.

    Labels are rendered to text (datetimes via isoformat) and hashed with
    the master seed, so the result is stable across processes and platforms.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master)).encode())
    for part in parts:
        if isinstance(part, datetime):
            h.update(part.isoformat().encode())
        else:
            h.update(str(part).encode())
        h.update(b"|")
    return int.from_bytes(h.digest(), "big")
