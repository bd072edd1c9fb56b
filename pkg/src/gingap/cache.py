"""Small file cache for expensive deterministic artifacts (tables, campaigns).

Everything cached here is a pure function of an explicit key, so a cache hit
is byte-for-byte equivalent to recomputation.  The cache directory comes from
the GINGAP_CACHE environment variable or an explicit argument; with neither,
caching is off.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

__all__ = ["resolve_cache_dir", "cache_key", "load_arrays", "save_arrays"]


def resolve_cache_dir(explicit=None):
    if explicit is not None:
        path = Path(explicit)
    else:
        env = os.environ.get("GINGAP_CACHE", "")
        if not env or env.lower() in ("0", "off", "none"):
            return None
        path = Path(env)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cache_key(kind: str, payload: dict) -> str:
    blob = json.dumps({"kind": kind, **payload}, sort_keys=True, separators=(",", ":"))
    return f"{kind}-{hashlib.sha256(blob.encode()).hexdigest()[:20]}"


def load_arrays(cache_dir, key: str):
    if cache_dir is None:
        return None
    path = Path(cache_dir) / f"{key}.npz"
    if not path.exists():
        return None
    with np.load(path, allow_pickle=False) as data:
        return {name: data[name] for name in data.files}


def save_arrays(cache_dir, key: str, **arrays) -> None:
    if cache_dir is None:
        return
    path = Path(cache_dir) / f"{key}.npz"
    tmp = path.with_suffix(".tmp.npz")
    np.savez(tmp, **arrays)
    os.replace(tmp, path)
