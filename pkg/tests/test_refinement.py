import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scenes import grid_box
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from elcois.clustering import canonical_labels, ellipsoidal_cluster
from elcois.core import EllipsoidParams
from elcois.refinement import KnownInstanceSet, diffuse_groups, majority_semantics, refine_known

PAPER = EllipsoidParams(rho=2.0, theta=2.0, phi=7.5)


def touching_groups(points, ids, r):
    """Transitive closure over pairwise minimum point distances."""
    uniq = np.unique(ids)
    k = len(uniq)
    adj = np.zeros((k, k), dtype=bool)
    for a in range(k):
        for b in range(a, k):
            d = cdist(points[ids == uniq[a]], points[ids == uniq[b]]).min()
            adj[a, b] = adj[b, a] = d <= r
    _, comp = connected_components(adj, directed=False)
    groups = {}
    for c, j in zip(comp, uniq):
        groups.setdefault(c, []).append(int(j))
    return sorted(sorted(g) for g in groups.values())


def test_adjacent_pair_groups():
    pts = np.array([[10.0, 0, 0], [10.0, 0.5, 0]])
    assert diffuse_groups(KnownInstanceSet(pts, [1, 2], 1.0)) == [[1, 2]]


def test_distant_pair_stays_apart():
    pts = np.array([[10.0, 0, 0], [20.0, 0, 0]])
    assert diffuse_groups(KnownInstanceSet(pts, [4, 9], 1.0)) == [[4], [9]]


def test_chain_is_transitive():
    pts = np.array([[0.0, 0, 0], [0.8, 0, 0], [1.6, 0, 0], [2.4, 0, 0], [10, 0, 0]])
    ids = np.array([1, 1, 2, 3, 5])
    groups = diffuse_groups(KnownInstanceSet(pts, ids, 1.0))
    assert groups == [[1, 2, 3], [5]]
    assert groups == touching_groups(pts, ids, 1.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 12), st.floats(0.3, 3.0))
def test_groups_match_pairwise_oracle(seed, n_inst, r):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-20, 20, size=(n_inst, 3)) * [1, 1, 0.1]
    sizes = rng.integers(1, 30, size=n_inst)
    pts = np.concatenate([c + rng.normal(scale=0.5, size=(s, 3)) for c, s in zip(centers, sizes)])
    ids = np.repeat(rng.permutation(np.arange(1, n_inst + 1)) * 3, sizes)
    groups = diffuse_groups(KnownInstanceSet(pts, ids, r))
    assert sorted(groups) == touching_groups(pts, ids, r)
    flat = [j for g in groups for j in g]
    assert sorted(flat) == sorted(np.unique(ids).tolist())


def test_known_set_validation():
    with pytest.raises(ValueError):
        KnownInstanceSet(np.zeros((2, 3)), [1, 0])
    with pytest.raises(ValueError):
        KnownInstanceSet(np.zeros((2, 3)), [1, 1], r=0.0)


def test_single_instance_fixed_point():
    pts = grid_box((10.0, -0.5, -1.0), (11.0, 0.5, 0.0), 0.1)
    labels = refine_known(KnownInstanceSet(pts, np.full(len(pts), 7)), PAPER)
    assert np.all(labels == 1)


def test_split_car_heals():
    car = grid_box((9.0, -0.9, -1.5), (13.0, 0.9, 0.0), 0.1)
    car = car[~((car[:, 0] > 10.85) & (car[:, 0] < 11.15))]
    ids = np.where(car[:, 0] < 11.0, 1, 2)
    assert diffuse_groups(KnownInstanceSet(car, ids, 1.0)) == [[1, 2]]
    labels = refine_known(KnownInstanceSet(car, ids, 1.0), PAPER)
    assert np.all(labels == 1)


def test_far_instances_stay_two():
    a = grid_box((10.0, 0.0, -1.0), (10.5, 0.5, -0.5), 0.1)
    b = a + [0.0, 5.0, 0.0]
    # 5 m lateral gap > r and far beyond 2 * max semi-axis (2 m) at ~10 m range
    pts = np.concatenate([a, b])
    ids = np.repeat([1, 2], len(a))
    labels = refine_known(KnownInstanceSet(pts, ids, 1.0), PAPER)
    assert canonical_labels(labels).tolist() == canonical_labels(ids).tolist()


def test_refine_is_partition_with_unique_ids():
    rng = np.random.default_rng(2)
    centers = rng.uniform(5, 40, size=(8, 3)) * [1, 1, 0.02]
    pts = np.concatenate([c + rng.normal(scale=0.3, size=(40, 3)) for c in centers])
    ids = np.repeat(np.arange(1, 9), 40)
    labels = refine_known(KnownInstanceSet(pts, ids, 1.0), PAPER)
    assert labels.min() >= 1
    assert set(np.unique(labels)) == set(range(1, labels.max() + 1))
    # every refined instance lies inside a single diffuse group
    groups = diffuse_groups(KnownInstanceSet(pts, ids, 1.0))
    group_of = {j: g for g, members in enumerate(groups) for j in members}
    for lab in np.unique(labels):
        assert len({group_of[j] for j in ids[labels == lab]}) == 1


def test_isolated_instances_reduce_to_per_instance_clustering():
    rng = np.random.default_rng(8)
    centers = np.array([[10, 0, 0], [10, 10, 0], [-15, 3, 0], [0, -20, 0.0]])
    pts = np.concatenate([c + rng.normal(scale=[0.6, 0.6, 0.2], size=(60, 3)) for c in centers])
    ids = np.repeat([1, 2, 3, 4], 60)
    known = KnownInstanceSet(pts, ids, 1.0)
    assert diffuse_groups(known) == [[1], [2], [3], [4]]
    labels = refine_known(known, PAPER)
    expected = np.zeros(len(pts), dtype=int)
    off = 0
    for j in (1, 2, 3, 4):
        run = ellipsoidal_cluster(pts[ids == j], PAPER)
        expected[ids == j] = run.labels + off
        off += run.n_clusters
    np.testing.assert_array_equal(labels, expected)


def test_group_order_independent():
    rng = np.random.default_rng(12)
    centers = rng.uniform(5, 30, size=(6, 3)) * [1, 1, 0.02]
    pts = np.concatenate([c + rng.normal(scale=0.4, size=(30, 3)) for c in centers])
    ids = np.repeat(np.arange(1, 7), 30)
    base = refine_known(KnownInstanceSet(pts, ids, 1.0), PAPER)
    # relabel original IDs so groups are discovered in another order
    swapped = refine_known(KnownInstanceSet(pts, 7 - ids, 1.0), PAPER)
    assert canonical_labels(base).tolist() == canonical_labels(swapped).tolist()


def test_majority_semantics():
    labels = np.array([1, 1, 1, 2, 2, 0])
    sem = np.array([10, 10, 18, 31, 30, 40])
    assert majority_semantics(labels, sem) == {1: 10, 2: 30}
