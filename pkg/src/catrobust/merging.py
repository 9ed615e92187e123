"""Merge embedding columns that sit close together.

Pairwise distances between the columns of every ``Q_i`` are pooled, the
``p``-quantile of the pool becomes the threshold ``t``, and each feature's
columns are clustered by complete linkage so that no two members of a cluster
are farther apart than ``t``.  Each cluster is then represented by the mean of
its columns, which makes the merged values indistinguishable downstream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import EmbeddingSet


@dataclass
class MergeResult:
    merged: EmbeddingSet
    cluster_maps: list[np.ndarray]
    threshold: float | None
    n_distances: int

    @property
    def n_clusters(self) -> int:
        return int(sum(c.max() + 1 for c in self.cluster_maps))


def pairwise_distances(Qi: np.ndarray) -> np.ndarray:
    diff = Qi.T[:, None, :] - Qi.T[None, :, :]
    return np.sqrt(np.sum(diff ** 2, axis=2))


def _upper(Dm: np.ndarray) -> np.ndarray:
    return Dm[np.triu_indices(len(Dm), k=1)]


def complete_linkage(Dm: np.ndarray, t: float) -> np.ndarray:
    """Agglomerate while some pair of clusters has max-distance <= ``t``.

    Returns a cluster id per point; ids are numbered by each cluster's lowest
    member.  Among equally close pairs the one with the lowest member indices
    is merged first.
    """
    n = len(Dm)
    clusters = [[j] for j in range(n)]
    link = Dm.astype(np.float64).copy()
    np.fill_diagonal(link, np.inf)
    active = list(range(n))
    while len(active) > 1:
        sub = link[np.ix_(active, active)]
        flat = int(np.argmin(sub))
        a, b = divmod(flat, len(active))
        if sub[a, b] > t:
            break
        ka, kb = active[a], active[b]
        if kb < ka:
            ka, kb = kb, ka
        clusters[ka] += clusters[kb]
        # complete linkage: distance to the union is the larger of the two
        link[ka, :] = np.maximum(link[ka, :], link[kb, :])
        link[:, ka] = link[ka, :]
        link[ka, ka] = np.inf
        active.remove(kb)
    labels = np.empty(n, dtype=np.int64)
    for cid, k in enumerate(sorted(active, key=lambda k: min(clusters[k]))):
        labels[clusters[k]] = cid
    return labels


def merge_embeddings(Q: EmbeddingSet, p: float, per_feature: bool = False) -> MergeResult:
    """Merge close columns of every ``Q_i`` at percentile ``p`` in [0, 1].

    ``p = 0`` performs no merging.  With ``per_feature=True`` each feature
    gets its own quantile threshold instead of the pooled one.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("percentile p must lie in [0, 1]")
    dists = [pairwise_distances(Qi) for Qi in Q.matrices]
    pooled = np.concatenate([_upper(Dm) for Dm in dists]) if dists else np.zeros(0)
    if p == 0 or pooled.size == 0:
        maps = [np.arange(Qi.shape[1]) for Qi in Q.matrices]
        return MergeResult(EmbeddingSet([Qi.copy() for Qi in Q.matrices], maps), maps, None,
                           int(pooled.size))
    t = float(np.quantile(pooled, p))
    maps, merged = [], []
    for Qi, Dm in zip(Q.matrices, dists):
        own = _upper(Dm)
        ti = (float(np.quantile(own, p)) if own.size else 0.0) if per_feature else t
        labels = complete_linkage(Dm, ti)
        Qm = Qi.copy()
        for c in range(labels.max() + 1):
            members = labels == c
            Qm[:, members] = Qi[:, members].mean(axis=1, keepdims=True)
        maps.append(labels)
        merged.append(Qm)
    return MergeResult(EmbeddingSet(merged, maps), maps, t, int(pooled.size))


def apply_merged(row, result: MergeResult) -> np.ndarray:
    """Embedded vector of one row (or a batch of rows) under the merged embeddings."""
    rows = np.asarray(row, dtype=np.int64)
    out = result.merged.embed_rows(np.atleast_2d(rows))
    return out[0] if rows.ndim == 1 else out
