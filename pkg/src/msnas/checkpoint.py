"""Binary checkpoint container: a JSON manifest plus raw little-endian arrays.

Layout: 8-byte magic, little-endian u64 manifest length, canonical-JSON
manifest ({version, meta, entries}), then the concatenated array payloads.
Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .canonical import canonical_json
from .cost import HeadSpec
from .errors import ConfigError
from .genome import SearchSpaceConfig
from .nn import Parameter
from .supernet import SupernetStore

MAGIC = b"MSNCKPT1"
FORMAT_VERSION = 1


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    entries = []
    blobs = []
    offset = 0
    for key in sorted(arrays):
        a = np.ascontiguousarray(arrays[key])
        raw = a.astype(a.dtype.newbyteorder("<"), copy=False).tobytes()
        entries.append({
            "key": key,
            "dtype": a.dtype.name,
            "shape": list(a.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    manifest = canonical_json({"version": FORMAT_VERSION, "meta": meta, "entries": entries}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(manifest)))
        f.write(manifest)
        for blob in blobs:
            f.write(blob)


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ConfigError(f"{path} is not a checkpoint file")
        (mlen,) = struct.unpack("<Q", f.read(8))
        manifest = json.loads(f.read(mlen).decode("utf-8"))
        if manifest.get("version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {manifest.get('version')!r}")
        payload = f.read()
    arrays = {}
    for e in manifest["entries"]:
        dt = np.dtype(e["dtype"]).newbyteorder("<")
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arrays[e["key"]] = np.frombuffer(raw, dtype=dt).astype(e["dtype"]).reshape(e["shape"])
    return arrays, manifest["meta"]


def save_store(path: str | Path, store: SupernetStore, *, extra_arrays: dict | None = None,
               meta: dict | None = None) -> None:
    arrays = {f"param.{k}": p.data for k, p in store.params.items()}
    for k, a in (extra_arrays or {}).items():
        arrays[k] = a
    full_meta = {
        "kind": "supernet-store",
        "search_space": store.config.canonical(),
        "head": store.head.canonical(),
        "config_hash": store.config.config_hash(),
        "dtype": str(store.dtype),
    }
    full_meta.update(meta or {})
    save_arrays(path, arrays, full_meta)


def load_store(path: str | Path) -> tuple[SupernetStore, dict[str, np.ndarray], dict]:
    arrays, meta = load_arrays(path)
    if meta.get("kind") != "supernet-store":
        raise ConfigError(f"{path} does not hold a supernet store")
    config = SearchSpaceConfig.from_dict(meta["search_space"])
    head = HeadSpec.from_dict(meta["head"])
    params = {}
    extras = {}
    for key, a in arrays.items():
        if key.startswith("param."):
            pkey = key[len("param."):]
            params[pkey] = Parameter(a, pkey)
        else:
            extras[key] = a
    return SupernetStore(config, head, params), extras, meta
