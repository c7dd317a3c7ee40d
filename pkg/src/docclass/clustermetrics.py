"""Cluster-validity metrics over ground-truth-labelled embeddings.

Cohesion is the mean cosine distance of each member to its class centroid,
averaged over classes; separation is the mean cosine distance between
distinct class centroids. Silhouette and Davies-Bouldin also use cosine
distance. Calinski-Harabasz needs sums of squares, so it uses squared
Euclidean distance on the (unit) vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateCentroid, DimensionMismatch, EmptyInput, TooFewClasses
from .vectorspace import cosine_distance_matrix, l2_normalize

INF = math.inf
METRIC_KEYS = ("intra", "inter", "ratio", "silhouette", "davies_bouldin", "calinski_harabasz")
_DEGENERATE_NORM = 1e-12
# below these, a distance or scatter is rounding noise and treated as exactly zero
ZERO_DISTANCE = 1e-12
ZERO_SCATTER = 1e-20


@dataclass
class LabeledEmbeddingSet:
    """Embeddings grouped by their true class.

    Vectors are L2-normalized on construction, so metrics do not depend on
    provider output scale. Class order is first-appearance order.
    """

    doc_ids: list[str]
    labels: list[str]
    vectors: np.ndarray
    class_index: dict[str, list[int]] = field(init=False)

    def __post_init__(self):
        if not (len(self.doc_ids) == len(self.labels) == len(self.vectors)):
            raise ValueError("doc_ids, labels and vectors must have equal length")
        if len(self.labels) == 0:
            raise EmptyInput("empty embedding set")
        rows = [np.asarray(v, dtype=np.float64) for v in self.vectors]
        dim = rows[0].shape
        for r in rows:
            if r.shape != dim:
                raise DimensionMismatch(f"{dim} != {r.shape}")
        self.vectors = np.stack([l2_normalize(r) for r in rows])
        self.class_index = {}
        for i, lab in enumerate(self.labels):
            self.class_index.setdefault(lab, []).append(i)

    @classmethod
    def from_items(cls, items: Iterable[tuple[str, str, Sequence[float]]]) -> LabeledEmbeddingSet:
        items = list(items)
        return cls([i[0] for i in items], [i[1] for i in items], [i[2] for i in items])

    @property
    def classes(self) -> list[str]:
        return list(self.class_index)

    def members(self, label: str) -> np.ndarray:
        return self.vectors[self.class_index[label]]

    def centroids(self) -> np.ndarray:
        return np.stack([self.members(c).mean(axis=0) for c in self.class_index])


def _checked_centroids(s: LabeledEmbeddingSet) -> np.ndarray:
    mus = s.centroids()
    for label, mu in zip(s.classes, mus):
        if np.linalg.norm(mu) <= _DEGENERATE_NORM:
            raise DegenerateCentroid(label)
    return mus


def _require_two(s: LabeledEmbeddingSet) -> None:
    if len(s.class_index) < 2:
        raise TooFewClasses(f"need at least 2 classes, got {len(s.class_index)}")


def intra_distance(s: LabeledEmbeddingSet) -> tuple[float, dict[str, float]]:
    mus = _checked_centroids(s)
    per_class = {}
    for label, mu in zip(s.classes, mus):
        d = cosine_distance_matrix(mu[None, :], s.members(label))[0]
        per_class[label] = float(d.mean())
    overall = float(np.mean(list(per_class.values())))
    return overall, per_class


def inter_distance(s: LabeledEmbeddingSet) -> float:
    _require_two(s)
    mus = _checked_centroids(s)
    c = len(mus)
    d = cosine_distance_matrix(mus)
    off = ~np.eye(c, dtype=bool)
    # ordered pairs: each unordered pair is counted twice
    return float(d[off].sum() / (c * (c - 1)))


def silhouette(s: LabeledEmbeddingSet) -> float:
    _require_two(s)
    d = cosine_distance_matrix(s.vectors)
    scores = np.zeros(len(s.labels))
    for label, idx in s.class_index.items():
        idx = np.asarray(idx)
        if len(idx) == 1:
            continue
        within = d[np.ix_(idx, idx)]
        a = within.sum(axis=1) / (len(idx) - 1)
        b = np.full(len(idx), INF)
        for other, oidx in s.class_index.items():
            if other == label:
                continue
            b = np.minimum(b, d[np.ix_(idx, oidx)].mean(axis=1))
        denom = np.maximum(a, b)
        with np.errstate(invalid="ignore", divide="ignore"):
            si = np.where(denom > 0, (b - a) / denom, 0.0)
        scores[idx] = si
    return float(scores.mean())


def davies_bouldin(s: LabeledEmbeddingSet) -> float:
    """Mean worst-case dispersion/separation ratio; +inf when two centroids coincide."""
    _require_two(s)
    _, spread = intra_distance(s)
    mus = _checked_centroids(s)
    sep = cosine_distance_matrix(mus)
    spread_v = np.array([spread[c] for c in s.classes])
    c = len(mus)
    worst = np.empty(c)
    for i in range(c):
        ratios = []
        for j in range(c):
            if i == j:
                continue
            num = spread_v[i] + spread_v[j]
            ratios.append(INF if sep[i, j] <= ZERO_DISTANCE else num / sep[i, j])
        worst[i] = max(ratios)
    return float(worst.mean())


def calinski_harabasz(s: LabeledEmbeddingSet) -> float:
    """Variance-ratio criterion; +inf for zero within-class scatter, 0 when there is no between-class scatter."""
    _require_two(s)
    x = s.vectors
    n, c = len(x), len(s.class_index)
    mu = x.mean(axis=0)
    bgss = 0.0
    wgss = 0.0
    for label in s.classes:
        m = s.members(label)
        mu_c = m.mean(axis=0)
        bgss += len(m) * float(np.sum((mu_c - mu) ** 2))
        wgss += float(np.sum((m - mu_c) ** 2))
    if bgss <= ZERO_SCATTER * n:
        return 0.0
    if wgss <= ZERO_SCATTER * n or n <= c:
        return INF
    return (bgss / (c - 1)) / (wgss / (n - c))


@dataclass
class ClusterQualityReport:
    intra: float
    inter: float
    ratio: float
    silhouette: float
    davies_bouldin: float
    calinski_harabasz: float
    per_class_intra: dict[str, float] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        """Flat serialization; infinities become the string ``"inf"``."""
        return {k: _encode(getattr(self, k)) for k in METRIC_KEYS}

    @classmethod
    def from_dict(cls, data: dict) -> ClusterQualityReport:
        return cls(**{k: _decode(data[k]) for k in METRIC_KEYS})


def _encode(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def _decode(x) -> float:
    return float(x)


def cluster_report(s: LabeledEmbeddingSet) -> ClusterQualityReport:
    _require_two(s)
    intra, per_class = intra_distance(s)
    inter = inter_distance(s)
    flags = []
    if intra > 0:
        ratio = inter / intra
    else:
        ratio = INF if inter > 0 else 0.0
        flags.append("zero_intra")
    db = davies_bouldin(s)
    if math.isinf(db):
        flags.append("coincident_centroids")
    ch = calinski_harabasz(s)
    if math.isinf(ch):
        flags.append("zero_within_variance")
    return ClusterQualityReport(
        intra=intra,
        inter=inter,
        ratio=ratio,
        silhouette=silhouette(s),
        davies_bouldin=db,
        calinski_harabasz=ch,
        per_class_intra=per_class,
        flags=flags,
    )
