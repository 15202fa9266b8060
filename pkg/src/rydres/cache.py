"""Content-addressed embedding cache.

A cache entry is keyed by the SHA-256 of everything that determines the
embeddings: backend, seed, encoding and noise parameters, probe protocol,
and the raw feature bytes.  Entries live under ``$RYDRES_CACHE`` (default
``.rydres-cache``) as the standard embedding CSV format plus a manifest;
the manifest is written last, so its presence marks a complete entry, and
anything unreadable counts as a miss rather than an error.  Full-precision
CSV (%.17g) round-trips float64 exactly, so cached and fresh runs produce
bit-identical reports.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import DataError
from .io import load_embeddings, load_json, save_embeddings, save_json

CACHE_ENV = "RYDRES_CACHE"
CACHE_FORMAT = 1


def root() -> Path:
    return Path(os.environ.get(CACHE_ENV, ".rydres-cache"))


def fingerprint(cfg, features: np.ndarray):
    """(key, parts) identifying the embeddings of ``features`` under ``cfg``."""
    feats = np.ascontiguousarray(features, dtype=np.float64)
    parts = {
        "format": CACHE_FORMAT,
        "backend": cfg.backend,
        "shots": cfg.shots,
        "shot_instances": cfg.shot_instances if cfg.backend == "qrc-shots" else 0,
        "seed": cfg.seed,
        "snapshot_mode": cfg.snapshot_mode,
        "encoding": asdict(cfg.encoding),
        "noise": asdict(cfg.noise),
        "n_datapoints": int(feats.shape[0]),
        "features_sha256": hashlib.sha256(feats.tobytes()).hexdigest(),
    }
    key = hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()
    return key, parts


def _entry_dir(key: str) -> Path:
    return root() / key[:2] / key


def load(key: str):
    """(base EmbeddingSet, resampled tuple) or None on miss/corruption."""
    entry = _entry_dir(key)
    manifest = entry / "manifest.json"
    if not manifest.exists():
        return None
    try:
        meta = load_json(manifest)
        base, _, _ = load_embeddings(entry / "embeddings.csv")
        resampled = tuple(
            load_embeddings(entry / f"resample_{s}.csv")[0]
            for s in range(meta["n_resamples"]))
    except (DataError, OSError, KeyError, TypeError):
        return None
    return base, resampled


def store(key: str, parts: dict, backend: str, base, resampled) -> None:
    entry = _entry_dir(key)
    entry.mkdir(parents=True, exist_ok=True)
    label = "crc" if backend == "crc" else "qrc"
    save_embeddings(entry / "embeddings.csv", base, label, {"cache_key": key})
    for s, emb in enumerate(resampled):
        save_embeddings(entry / f"resample_{s}.csv", emb, label,
                        {"cache_key": key, "shot_instance": s})
    save_json(manifest_path(key), {"schema_version": 1, "parts": parts,
                                   "n_resamples": len(resampled)})


def manifest_path(key: str) -> Path:
    return _entry_dir(key) / "manifest.json"
