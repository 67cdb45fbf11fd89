"""Deterministic random-stream derivation.

All randomness in the package flows through numpy's PCG64 bit generator.
Streams are derived from integer/string label tuples via SeedSequence, so a
stream is a pure function of its labels: the same (seed, labels...) always
yields the same sample sequence, independent of creation order. Every trace
records RNG_NAME and the label tuple that produced its stream.
"""

from __future__ import annotations

import hashlib

import numpy as np

RNG_NAME = "numpy-pcg64"


def _label_to_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFFFFFFFFFF
    if isinstance(label, str):
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"rng labels must be int or str, got {type(label).__name__}")


def seed_components(*labels) -> list[int]:
    """Map a label tuple to the integer entropy list fed to SeedSequence."""
    if not labels:
        raise ValueError("at least one rng label is required")
    return [_label_to_int(x) for x in labels]


def derive_rng(*labels) -> np.random.Generator:
    """Return a PCG64 generator keyed by the given labels."""
    ss = np.random.SeedSequence(seed_components(*labels))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(*labels) -> int:
    """Collapse a label tuple into a single reproducible 63-bit seed."""
    ss = np.random.SeedSequence(seed_components(*labels))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
