"""Reservoir embeddings: per-datapoint feature vectors from probe readouts.

One embedding concatenates, probe by probe, the single-site <Z_i> block
followed by the <Z_i Z_j> pair block, for both the quantum and classical
backends (classical runs use S^z values and their products).  Shot-based
estimates support the resampling protocol (keep a fixed fraction of the shot
pool per uncertainty instance) and the disjoint half-split used when one
half labels synthetic data and the other trains on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .csim import ClassicalRecord, crc_expectations
from .errors import ConfigError, DataError
from .qsim import (EvolutionRecord, ObservableSpec, ShotTable,
                   estimated_expectations, exact_expectations)


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """(n_datapoints, dim) embedding matrix with per-column labels.

    Column order is probe-major: all observables of probe 0, then probe 1,
    and so on; labels look like ``Z_3@t_1`` and ``ZZ_0_4@t_2`` with the
    probe index after ``t_``.
    """

    values: np.ndarray
    labels: tuple
    probe_times: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[1] != len(self.labels):
            raise DataError(f"embedding matrix {vals.shape} does not match "
                            f"{len(self.labels)} labels")
        if not np.all(np.isfinite(vals)):
            raise DataError("embeddings contain non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n_points(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])


def embedding_labels(obs: ObservableSpec, n_probes: int) -> tuple:
    return tuple(f"{name}@t_{k}" for k in range(n_probes) for name in obs.labels())


def _stack(rows: list, labels: tuple, probe_times: tuple) -> EmbeddingSet:
    return EmbeddingSet(np.stack(rows, axis=0), labels, probe_times)


def embed_exact(records: list, obs: ObservableSpec) -> EmbeddingSet:
    """Embeddings from exact outcome distributions (quantum backend)."""
    if not records:
        raise DataError("no evolution records to embed")
    probe_times = records[0].probe_times
    rows = []
    for rec in records:
        if rec.probe_times != probe_times:
            raise DataError("records disagree on probe times")
        rows.append(exact_expectations(rec, obs).ravel())
    return _stack(rows, embedding_labels(obs, len(probe_times)), probe_times)


def embed_classical(records: list, obs: ObservableSpec) -> EmbeddingSet:
    """Embeddings from classical spin records."""
    if not records:
        raise DataError("no classical records to embed")
    probe_times = records[0].probe_times
    rows = [crc_expectations(rec, obs).ravel() for rec in records]
    return _stack(rows, embedding_labels(obs, len(probe_times)), probe_times)


def embed_shots(tables: list, obs: ObservableSpec,
                shot_idx: np.ndarray | None = None) -> EmbeddingSet:
    """Embeddings from sampled shots; ``shot_idx`` selects a shot subset."""
    if not tables:
        raise DataError("no shot tables to embed")
    probe_times = tables[0].probe_times
    rows = [estimated_expectations(t, obs, shot_idx).ravel() for t in tables]
    return _stack(rows, embedding_labels(obs, len(probe_times)), probe_times)


# ------------------------------------------------------------- shot subsets #


def resample_indices(n_shots: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """floor(fraction * n_shots) distinct shot positions, uniformly chosen."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    keep = int(math.floor(fraction * n_shots))
    if keep < 1:
        raise ConfigError(f"fraction {fraction} keeps no shots out of {n_shots}")
    return np.sort(rng.choice(n_shots, size=keep, replace=False))


def split_half_indices(n_shots: int, rng: np.random.Generator):
    """Random disjoint halves of the shot pool; odd counts favor the first."""
    if n_shots < 2:
        raise ConfigError(f"cannot split {n_shots} shots into halves")
    perm = rng.permutation(n_shots)
    cut = (n_shots + 1) // 2
    return np.sort(perm[:cut]), np.sort(perm[cut:])


# -------------------------------------------------------------- consistency #


def consistency_rho(a: EmbeddingSet, b: EmbeddingSet, batch_size: int = 60) -> float:
    """Mean Pearson correlation between two embedding sets over data batches.

    Datapoints are grouped into consecutive batches; each batch's embedding
    block is flattened and correlated between the two sets, and the batch
    correlations are averaged.  Identical sets give exactly 1.0.
    """
    if a.values.shape != b.values.shape:
        raise DataError(f"embedding shapes differ: {a.values.shape} vs {b.values.shape}")
    n = a.n_points
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    n_batches = max(1, n // batch_size)
    rs = []
    for k in range(n_batches):
        sl = slice(k * batch_size, min((k + 1) * batch_size, n))
        va = a.values[sl].ravel()
        vb = b.values[sl].ravel()
        if np.array_equal(va, vb):  # identical blocks correlate at exactly 1
            rs.append(1.0)
            continue
        da = va - va.mean()
        db = vb - vb.mean()
        denom = np.linalg.norm(da) * np.linalg.norm(db)
        if denom == 0.0:
            rs.append(0.0)
        else:
            rs.append(float(np.clip(da @ db / denom, -1.0, 1.0)))
    return float(np.mean(rs))
