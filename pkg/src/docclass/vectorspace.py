"""Embedding vector algebra: validation, L2 normalization, cosine distance and centroids.

Vectors are plain 1-D float64 numpy arrays. Provider outputs are normalized on
receipt; centroids are plain means of those unit vectors and are deliberately
not renormalized.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyInput, ZeroVector


def as_vector(values) -> np.ndarray:
    """Coerce to a finite, nonempty 1-D float64 array."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"embedding must be a nonempty 1-D sequence, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("embedding contains non-finite components")
    return v


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape[0]} != {b.shape[0]}")


def l2_normalize(v) -> np.ndarray:
    v = as_vector(v)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ZeroVector("cannot normalize a zero vector")
    return v / norm


def cosine_similarity(a, b) -> float:
    a, b = as_vector(a), as_vector(b)
    _check_dims(a, b)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))


def cosine_distance(a, b) -> float:
    """1 - cosine similarity, clamped to [0, 2]."""
    return min(2.0, max(0.0, 1.0 - cosine_similarity(a, b)))


def centroid(vectors: Iterable) -> np.ndarray:
    vs = [as_vector(v) for v in vectors]
    if not vs:
        raise EmptyInput("centroid of an empty set")
    dim = vs[0].shape
    for v in vs[1:]:
        if v.shape != dim:
            raise DimensionMismatch(f"{dim[0]} != {v.shape[0]}")
    return np.mean(np.stack(vs), axis=0)


def stack(vectors: Sequence) -> np.ndarray:
    """Stack same-dimension vectors into an ``(n, dim)`` matrix."""
    if len(vectors) == 0:
        raise EmptyInput("no vectors")
    vs = [as_vector(v) for v in vectors]
    dim = vs[0].shape[0]
    for v in vs:
        if v.shape[0] != dim:
            raise DimensionMismatch(f"{dim} != {v.shape[0]}")
    return np.stack(vs)


def cosine_distance_matrix(x: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
    """Pairwise cosine distances between rows of ``x`` and rows of ``y``."""
    y = x if y is None else y
    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    if np.any(nx == 0.0) or np.any(ny == 0.0):
        raise ZeroVector("zero row in distance matrix input")
    sim = (x @ y.T) / np.outer(nx, ny)
    return np.clip(1.0 - sim, 0.0, 2.0)
