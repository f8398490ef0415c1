"""Canonical serialization helpers: every persisted document must be byte-reproducible."""

from __future__ import annotations

import hashlib
import json
import math


def canonical_json(obj) -> str:
    """Serialize with sorted keys and no incidental whitespace; trailing newline."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def doc_hash(obj) -> str:
    """Stable hash of a JSON-representable document."""
    return sha256_hex(canonical_json(obj))


def log10_int(n: int) -> float:
    """log10 of a (possibly huge) positive integer, good to ~12 significant digits."""
    if n <= 0:
        raise ValueError("log10_int requires a positive integer")
    s = str(n)
    head = len(s) if len(s) <= 15 else 15
    return (len(s) - head) + math.log10(int(s[:head]))
