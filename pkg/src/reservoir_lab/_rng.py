"""Seeded random streams.

Every random draw in this package flows through a counter-based Philox
generator (numpy's ``Philox`` 4x64 with 10 rounds), keyed by a 64-bit seed.
The generator identity is part of the on-disk format contract: a stored seed
must regenerate the same entries on any platform.

Substreams are derived by hashing a tuple of labels with SHA-256 and
truncating to 64 bits, so independent parts of an experiment never share a
stream by accident.
"""

from __future__ import annotations

import hashlib

import numpy as np

RNG_ALGORITHM = "numpy-philox4x64-10"

_MAX_UINT64 = 2**64 - 1


def philox(seed: int) -> np.random.Generator:
    """Return the Philox generator for a 64-bit seed."""
    seed = int(seed)
    if not 0 <= seed <= _MAX_UINT64:
        raise ValueError(f"seed must fit in uint64, got {seed}")
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def _canon(part) -> str:
    if isinstance(part, float):
        return repr(part)
    if isinstance(part, (bool, int, str)):
        return repr(part)
    if isinstance(part, (tuple, list)):
        return "(" + ",".join(_canon(p) for p in part) + ")"
    raise TypeError(f"cannot derive seed from {type(part).__name__}")


def derive_seed(*parts) -> int:
    """Hash a tuple of labels/values into a uint64 substream seed."""
    blob = "\x1f".join(_canon(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")
