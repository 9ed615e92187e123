import itertools

import numpy as np
import pytest
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from catrobust.merging import apply_merged, complete_linkage, merge_embeddings, pairwise_distances
from catrobust.net import EmbeddingSet, init_embeddings


def certificate(Dm, labels, t):
    """Complete-linkage certificate: clusters have diameter <= t and no two can still be joined."""
    groups = [np.flatnonzero(labels == c) for c in range(labels.max() + 1)]
    if not all(Dm[np.ix_(g, g)].max() <= t + 1e-12 for g in groups):
        return False
    for g, h in itertools.combinations(groups, 2):
        if Dm[np.ix_(g, h)].max() <= t:
            return False
    return True


def same_partition(a, b):
    return all((a[i] == a[j]) == (b[i] == b[j]) for i, j in itertools.combinations(range(len(a)), 2))


def test_zero_percentile_is_identity(rng):
    Q = init_embeddings([3, 5, 2], 4, rng)
    res = merge_embeddings(Q, 0.0)
    assert all(np.array_equal(a, b) for a, b in zip(res.merged.matrices, Q.matrices))
    assert all(np.array_equal(m, np.arange(Qi.shape[1])) for m, Qi in zip(res.cluster_maps, Q.matrices))
    assert res.threshold is None


@pytest.mark.parametrize("p", [0.01, 0.05, 0.1, 0.5])
def test_identical_columns_always_merge(rng, p):
    Q0 = rng.normal(size=(3, 4))
    Q0[:, 2] = Q0[:, 0]
    res = merge_embeddings(EmbeddingSet([Q0, rng.normal(size=(3, 6))]), p)
    labels = res.cluster_maps[0]
    assert labels[0] == labels[2]
    if np.sum(labels == labels[0]) == 2:
        assert np.array_equal(res.merged.matrices[0][:, 0], Q0[:, 0])


def test_collinear_triple():
    # distances a-b 1, b-c 1, a-c 2
    Qi = np.array([[0.0, 1.0, 2.0]])
    Dm = pairwise_distances(Qi)
    assert Dm[0, 1] == 1 and Dm[1, 2] == 1 and Dm[0, 2] == 2
    labels = complete_linkage(Dm, 1.5)
    assert labels.tolist() == [0, 0, 1]
    assert certificate(Dm, labels, 1.5)


def test_collinear_triple_through_merge():
    Q = EmbeddingSet([np.array([[0.0, 1.0, 2.0]])])
    res = merge_embeddings(Q, 0.5)  # pooled [1, 1, 2] -> t = 1
    assert res.threshold == pytest.approx(1.0)
    assert res.merged.matrices[0].tolist() == [[0.5, 0.5, 2.0]]


def test_certificate_randomized(rng):
    for _ in range(200):
        n = int(rng.integers(2, 9))
        Dm = pairwise_distances(rng.normal(size=(2, n)))
        t = float(rng.uniform(0, 3))
        assert certificate(Dm, complete_linkage(Dm, t), t)


def test_matches_scipy_complete_linkage(rng):
    for _ in range(100):
        n = int(rng.integers(2, 12))
        Dm = pairwise_distances(rng.normal(size=(3, n)))
        t = float(np.quantile(Dm[np.triu_indices(n, 1)], rng.uniform(0.05, 0.6)))
        ref = fcluster(linkage(squareform(Dm, checks=False), method="complete"), t, criterion="distance")
        assert same_partition(complete_linkage(Dm, t), ref)


def test_certificate_holds_at_every_percentile(rng):
    Q = init_embeddings([4, 7, 3, 5], 3, rng)
    for p in (0.02, 0.05, 0.1, 0.15, 0.2, 0.5, 1.0):
        res = merge_embeddings(Q, p)
        for Qi, labels in zip(Q.matrices, res.cluster_maps):
            assert certificate(pairwise_distances(Qi), labels, res.threshold)


def test_cluster_count_monotone(rng):
    Q = init_embeddings([6, 8, 5], 3, rng)
    counts = [merge_embeddings(Q, p).n_clusters for p in np.linspace(0, 1, 21)]
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    assert counts[0] == 19


def test_merged_columns_are_cluster_means(rng):
    Q = init_embeddings([5, 6], 3, rng)
    res = merge_embeddings(Q, 0.3)
    for Qi, Qm, labels in zip(Q.matrices, res.merged.matrices, res.cluster_maps):
        for c in range(labels.max() + 1):
            mean = Qi[:, labels == c].mean(axis=1)
            assert np.allclose(Qm[:, labels == c], mean[:, None])


def test_per_feature_thresholds(rng):
    Q = EmbeddingSet([rng.normal(size=(2, 4)), 100 * rng.normal(size=(2, 4))])
    pooled = merge_embeddings(Q, 0.3)
    own = merge_embeddings(Q, 0.3, per_feature=True)
    assert pooled.cluster_maps[1].max() == 3  # large-scale feature untouched under pooling
    assert own.cluster_maps[1].max() < 3


@pytest.mark.parametrize("p", [-0.1, 1.1])
def test_bad_percentile(rng, p):
    with pytest.raises(ValueError):
        merge_embeddings(init_embeddings([3], 2, rng), p)


def test_apply_merged(rng):
    Q = EmbeddingSet([np.array([[0.0, 0.0, 5.0]]), np.array([[1.0, 2.0]])])
    res = merge_embeddings(Q, 0.2)
    assert res.cluster_maps[0].tolist() == [0, 0, 1]
    assert apply_merged([0, 1], res).tolist() == apply_merged([1, 1], res).tolist() == [0.0, 2.0]
    assert apply_merged(np.array([[2, 0], [0, 0]]), res).tolist() == [[5.0, 1.0], [0.0, 1.0]]
