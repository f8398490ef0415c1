"""Namespaced random streams.

All randomness in the package flows from one root seed. Independent consumers
(samplers, data loaders, per-generation offspring, parameter init) derive their
own generator from the root seed plus a path of names/counters, so any piece of
the pipeline can be replayed in isolation and concurrent consumers never share
a stream.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("seed path counters must be non-negative")
        return int(part)
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"seed path parts must be str or int, got {type(part)!r}")


def derive_rng(root_seed: int, *path) -> np.random.Generator:
    """Generator for the stream named by ``path`` under ``root_seed``."""
    spawn_key = tuple(_key_part(p) for p in path)
    return np.random.default_rng(np.random.SeedSequence(root_seed, spawn_key=spawn_key))


def as_rng(seed_or_rng) -> np.random.Generator:
    """Accept either a ready generator or a plain integer seed."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(int(seed_or_rng))
