"""Core value types: embeddings, labels, samples, and the cosine kernel.

Embeddings are plain 1-D float64 numpy arrays. Validation happens once at
ingestion (``as_embedding``); everything downstream assumes valid vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent input data (bad rows, dimensions, labels)."""


class TrialError(RuntimeError):
    """A streaming trial aborted; carries the offending experiment cell."""


class Label(IntEnum):
    NORMAL = 0
    ANOMALOUS = 1


class Domain(str, Enum):
    SOURCE = "source"
    TARGET = "target"


def as_embedding(values, dim: int | None = None) -> np.ndarray:
    """Validate and convert ``values`` into a read-only float64 vector.

    Rejects non-1-D input, NaN/infinity components, zero vectors (the cosine
    kernel is undefined for them), and, when ``dim`` is given, any dimension
    mismatch.
    """
    e = np.ascontiguousarray(values, dtype=np.float64)
    if e.ndim != 1 or e.size < 1:
        raise DataError(f"embedding must be a 1-D vector, got shape {e.shape}")
    if dim is not None and e.size != dim:
        raise DataError(f"embedding dimension {e.size} != expected {dim}")
    if not np.all(np.isfinite(e)):
        raise DataError("embedding has non-finite components")
    if not np.any(e):
        raise DataError("embedding is the zero vector")
    e.flags.writeable = False
    return e


@dataclass(frozen=True)
class Sample:
    """One stream element: an embedding plus metadata.

    ``label`` is ground truth; the engine never reads it directly — it is
    surfaced only through the annotation oracle and the evaluation log.
    """

    id: str
    machine: str
    domain: Domain
    label: Label
    embedding: np.ndarray


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity <a,b>/(||a||*||b||), clamped to [-1, 1].

    The clamp absorbs floating-point drift for near-parallel vectors so
    downstream scores stay inside their documented bounds.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vectors")
    sim = float(np.dot(a, b) / (na * nb))
    return min(1.0, max(-1.0, sim))
