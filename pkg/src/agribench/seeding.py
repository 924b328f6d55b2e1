"""Deterministic seed derivation.

All randomness in the toolkit flows from a single base seed. Derived seeds
are computed by hashing the base seed together with context labels (repeat
index, tree index, unit id, ...) so that results never depend on execution
order, scheduling, or process state. Python's builtin ``hash`` is salted per
process and must not be used here.
"""

import hashlib

import numpy as np


def derive_seed(*parts: int | str) -> int:
    """Map a tuple of ints/strings to a stable unsigned 64-bit seed."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, bool) or not isinstance(part, (int, str)):
            raise TypeError(f"seed parts must be int or str, got {type(part).__name__}")
        tag = "i" if isinstance(part, int) else "s"
        token = f"{tag}:{part}"
        h.update(len(token).to_bytes(4, "little"))
        h.update(token.encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


def spawn_rng(*parts: int | str) -> np.random.Generator:
    """Create a generator whose stream is a pure function of ``parts``."""
    return np.random.default_rng(derive_seed(*parts))
