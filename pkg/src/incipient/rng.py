"""Deterministic RNG streams keyed by (master seed, purpose tags)."""

from __future__ import annotations

import zlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError(f"negative seed component: {tag}")
        return int(tag)
    if isinstance(tag, float):
        # sweep coordinates such as rho=0.2 become stable integers
        return zlib.crc32(repr(float(tag)).encode())
    return zlib.crc32(str(tag).encode("utf-8"))


def seed_sequence(seed: int, *tags) -> np.random.SeedSequence:
    return np.random.SeedSequence([_tag_to_int(seed), *(_tag_to_int(t) for t in tags)])


def make_rng(seed: int, *tags) -> np.random.Generator:
    """Return a Generator whose stream depends only on ``seed`` and ``tags``.

    Tags may be ints, floats or strings; strings are hashed with CRC32 so the
    mapping is stable across processes and Python versions.
    """
    return np.random.default_rng(seed_sequence(seed, *tags))
