"""Deterministic seed, identifier, and payload derivation.

Everything random in the simulator is derived from a user-supplied 64-bit
seed through SHA-256, so runs are reproducible and sub-seeds for unrelated
purposes (peer ids, view sampling, failure draws, file contents) never
collide.
"""

from __future__ import annotations

import hashlib
import random


def derive_bytes(*parts: bytes | str | int) -> bytes:
    """Hash a label/seed tuple into 32 bytes, length-prefixing each part."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, bytes):
            raw = part
        elif isinstance(part, str):
            raw = part.encode("utf-8")
        elif isinstance(part, int):
            if part < 0:
                raise ValueError("seed parts must be non-negative")
            raw = part.to_bytes(16, "big")
        else:
            raise TypeError(f"unsupported seed part type: {type(part)!r}")
        h.update(len(raw).to_bytes(4, "big"))
        h.update(raw)
    return h.digest()


def derive_int(*parts: bytes | str | int) -> int:
    """Derive a 64-bit sub-seed."""
    return int.from_bytes(derive_bytes(*parts)[:8], "big")


def derive_rng(*parts: bytes | str | int) -> random.Random:
    """Derive an independent, reproducible RNG."""
    return random.Random(derive_int(*parts))


def seeded_bytes(n: int, *parts: bytes | str | int) -> bytes:
    """Produce n reproducible pseudo-random bytes for a label/seed tuple."""
    if n < 0:
        raise ValueError("byte count must be non-negative")
    return derive_rng(*parts).randbytes(n)
