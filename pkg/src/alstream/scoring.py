"""Anomaly scoring against reference embedding sets.

The scoring backend's whole state is two ordered embedding sets: the normal
set (built offline, grown online) and the anomalous set (empty until the
oracle labels something anomalous). Scores:

  base score        1 - max cosine similarity to any normal member, in [0, 2]
  anomaly similarity    max cosine similarity to any anomalous member
  augmented score   base score while the anomalous set is empty, otherwise
                    (1 - gamma) * base + gamma * similarity
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .types import Label, as_embedding


@dataclass(frozen=True)
class ScorerConfig:
    """Blend weight between the normal-set score and the anomaly similarity."""

    gamma: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")


class _MemberBuffer:
    """Append-only row buffer with amortized growth.

    Keeps raw rows (insertion order, exact values) and unit-normalized rows
    (for one-matvec cosine lookups) in lockstep.
    """

    def __init__(self, dim: int, capacity: int = 64):
        self._dim = dim
        self._n = 0
        self._raw = np.empty((capacity, dim), dtype=np.float64)
        self._unit = np.empty((capacity, dim), dtype=np.float64)

    def __len__(self) -> int:
        return self._n

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def rows(self) -> np.ndarray:
        return self._raw[: self._n]

    @property
    def unit_rows(self) -> np.ndarray:
        return self._unit[: self._n]

    def append(self, e: np.ndarray) -> None:
        if e.shape != (self._dim,):
            raise ValueError(f"dimension mismatch: {e.shape[0]} vs {self._dim}")
        if self._n == self._raw.shape[0]:
            self._raw = np.vstack([self._raw, np.empty_like(self._raw)])
            self._unit = np.vstack([self._unit, np.empty_like(self._unit)])
        self._raw[self._n] = e
        self._unit[self._n] = e / np.linalg.norm(e)
        self._n += 1

    def copy(self) -> "_MemberBuffer":
        out = _MemberBuffer(self._dim, capacity=max(64, self._n))
        out._raw[: self._n] = self._raw[: self._n]
        out._unit[: self._n] = self._unit[: self._n]
        out._n = self._n
        return out

    def max_cosine(self, unit_e: np.ndarray) -> float:
        """Max cosine similarity between ``unit_e`` and any stored member."""
        sims = self._unit[: self._n] @ unit_e
        return min(1.0, max(-1.0, float(sims.max())))


class ReferenceSets:
    """Ordered normal and anomalous reference embedding sets.

    Members are multisets with insertion order preserved, which makes the
    max-over-members lookups (and their tie-breaking) deterministic. Mutation
    is append-only.
    """

    def __init__(self, normal: Iterable = (), anomalous: Iterable = (), dim: int | None = None):
        normal = [as_embedding(e, dim) for e in normal]
        if dim is None:
            if not normal:
                raise ValueError("dimension unknown: provide normal members or dim=")
            dim = normal[0].size
        self._normal = _MemberBuffer(dim)
        self._anomalous = _MemberBuffer(dim)
        for e in normal:
            self._normal.append(e)
        for e in anomalous:
            self._anomalous.append(as_embedding(e, dim))

    @property
    def dim(self) -> int:
        return self._normal.dim

    @property
    def normal(self) -> np.ndarray:
        """Normal members as an (n, dim) view, insertion order."""
        return self._normal.rows

    @property
    def anomalous(self) -> np.ndarray:
        return self._anomalous.rows

    @property
    def n_normal(self) -> int:
        return len(self._normal)

    @property
    def n_anomalous(self) -> int:
        return len(self._anomalous)

    def add(self, e, label: Label) -> None:
        """Append ``e`` to the anomalous set if labeled anomalous, else normal."""
        e = as_embedding(e, self.dim)
        if label == Label.ANOMALOUS:
            self._anomalous.append(e)
        else:
            self._normal.append(e)

    def copy(self) -> "ReferenceSets":
        out = ReferenceSets.__new__(ReferenceSets)
        out._normal = self._normal.copy()
        out._anomalous = self._anomalous.copy()
        return out


def _unit(e: np.ndarray) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    n = np.linalg.norm(e)
    if n == 0.0:
        raise ValueError("zero-norm embedding")
    return e / n


def base_score(e, refs: ReferenceSets) -> float:
    """1 - max cosine similarity between ``e`` and the normal set; in [0, 2].

    0 means identical (up to scale) to some stored normal member.
    """
    if refs.n_normal == 0:
        raise ValueError("normal reference set is empty")
    e = np.asarray(e, dtype=np.float64)
    if e.shape != (refs.dim,):
        raise ValueError(f"dimension mismatch: {e.shape} vs ({refs.dim},)")
    return 1.0 - refs._normal.max_cosine(_unit(e))


def anomaly_similarity(e, refs: ReferenceSets) -> float:
    """Max cosine similarity between ``e`` and the anomalous set; in [-1, 1].

    The anomalous set must be non-empty; the augmented score branches around
    that case instead of calling this.
    """
    if refs.n_anomalous == 0:
        raise ValueError("anomalous reference set is empty")
    e = np.asarray(e, dtype=np.float64)
    if e.shape != (refs.dim,):
        raise ValueError(f"dimension mismatch: {e.shape} vs ({refs.dim},)")
    return refs._anomalous.max_cosine(_unit(e))


def blend_scores(base: float, similarity: float, gamma: float) -> float:
    """(1 - gamma) * base + gamma * similarity."""
    return (1.0 - gamma) * base + gamma * similarity


def augmented_score(e, refs: ReferenceSets, cfg: ScorerConfig) -> float:
    """Blended anomaly score; falls back to the base score while no labeled
    anomalies exist."""
    a = base_score(e, refs)
    if refs.n_anomalous == 0:
        return a
    return blend_scores(a, anomaly_similarity(e, refs), cfg.gamma)
