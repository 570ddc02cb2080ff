"""Deterministic seed derivation for parallel-safe sampling.

Every sampling site derives its generator from (master_seed, *path), where
the path is a tuple of small integers and/or short labels.  Identical
paths always yield identical streams, and distinct paths are statistically
independent, so trials can run in any order or concurrently.
"""

from __future__ import annotations

import zlib

import numpy as np


def _encode(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"seed path parts must be int or str, got {type(part)!r}")


def derive_seed_sequence(master_seed: int, *path) -> np.random.SeedSequence:
    return np.random.SeedSequence(
        entropy=int(master_seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=tuple(_encode(p) for p in path),
    )


def derive_rng(master_seed: int, *path) -> np.random.Generator:
    return np.random.default_rng(derive_seed_sequence(master_seed, *path))
