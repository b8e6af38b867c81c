"""Ellipsoidal clustering, the fixed-radius Euclidean baseline, and an O(n^2) oracle."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .core import AxesArrays, EllipsoidAxes, EllipsoidParams, as_points, ellipsoid_axes_array
from .spatial import RadiusIndex

BRUTE_FORCE_LIMIT = 5000


class OracleSizeError(ValueError):
    pass


@dataclass
class ClusterRun:
    labels: np.ndarray
    n_clusters: int
    early_termination: bool = False


class MergeGraph:
    """Disjoint set over instance IDs ``1..N``; ID 0 is reserved for "unassigned"."""

    def __init__(self):
        self.parent = [0]
        self.size = [0]

    def __len__(self) -> int:
        return len(self.parent) - 1

    def add(self) -> int:
        new = len(self.parent)
        self.parent.append(new)
        self.size.append(1)
        return new

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, x: int, y: int) -> int:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return rx
        if self.size[rx] < self.size[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        self.size[rx] += self.size[ry]
        return rx

    def roots(self) -> np.ndarray:
        """Representative of every ID, with ``roots()[0] == 0``."""
        return np.array([self.find(i) for i in range(len(self.parent))], dtype=np.int64)


def canonical_labels(labels, keep_zero: bool = True) -> np.ndarray:
    """Relabel densely to ``1..K`` in order of each label's first occurrence.

    Two labelings describe the same partition iff their canonical forms are
    equal. With ``keep_zero`` the label 0 stays 0 and is not counted.
    """
    labels = np.asarray(labels)
    out = np.zeros(len(labels), dtype=np.int64)
    if len(labels) == 0:
        return out
    mask = labels != 0 if keep_zero else np.ones(len(labels), dtype=bool)
    vals = labels[mask]
    if len(vals) == 0:
        return out
    uniq, first, inv = np.unique(vals, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(1, len(uniq) + 1)
    out[mask] = rank[inv]
    return out


def ellipsoid_lhs(center, cos_l, sin_l, a, b, c, candidates) -> np.ndarray:
    """Left-hand side of the ellipsoid inequality for each candidate point.

    The ellipsoid is centred on ``center`` with its ``a`` axis along the
    sensor ray azimuth, ``b`` horizontal across it and ``c`` vertical.
    Arguments broadcast, so a row of centres can be tested against a row
    of candidates in one call.
    """
    dx = candidates[..., 0] - center[..., 0]
    dy = candidates[..., 1] - center[..., 1]
    dz = candidates[..., 2] - center[..., 2]
    radial = dx * cos_l + dy * sin_l
    lateral = -dx * sin_l + dy * cos_l
    return (radial * radial) / (a * a) + (lateral * lateral) / (b * b) + (dz * dz) / (c * c)


def in_ellipsoid(query, axes: EllipsoidAxes, candidate) -> bool:
    q = np.asarray(query, dtype=np.float64)
    p = np.asarray(candidate, dtype=np.float64)
    lhs = ellipsoid_lhs(q, np.cos(axes.lam), np.sin(axes.lam), axes.a, axes.b, axes.c, p)
    return bool(lhs <= 1.0)


class EllipsoidNeighborhood:
    """Per-point ellipsoidal neighbor lookup backed by a radius index.

    Candidates come from a ball of radius ``max(a, b, c)``, which encloses
    the ellipsoid; the inequality then filters them.
    """

    def __init__(self, points, params: EllipsoidParams | None = None, *,
                 axes: Optional[AxesArrays] = None, index: Optional[RadiusIndex] = None):
        self.points = as_points(points)
        if axes is None:
            if params is None:
                raise ValueError("either params or axes is required")
            axes = ellipsoid_axes_array(self.points, params)
        if len(axes.a) != len(self.points):
            raise ValueError("axes arrays do not match the point count")
        if index is None:
            index = RadiusIndex(self.points)
        elif len(index) != len(self.points) or not np.array_equal(index.points, self.points):
            raise ValueError("radius index was not built over these points")
        self.index = index
        self.axes = axes
        self.cos_l = np.cos(axes.lam)
        self.sin_l = np.sin(axes.lam)
        self.radius = axes.radius()
        self.inner = axes.inner_radius()

    def candidates(self, i: int) -> np.ndarray:
        return self.index.find_neighbors(self.points[i], self.radius[i])

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Indices inside the ellipsoid of point ``i`` and their 3D distances to it."""
        cand = self.candidates(i)
        center = self.points[i]
        cpts = self.points[cand]
        ax = self.axes
        lhs = ellipsoid_lhs(center, self.cos_l[i], self.sin_l[i], ax.a[i], ax.b[i], ax.c[i], cpts)
        keep = lhs <= 1.0
        diff = cpts[keep] - center
        return cand[keep], np.sqrt(np.einsum("ij,ij->i", diff, diff))


def ellipsoidal_cluster(cloud, params: EllipsoidParams | None = None,
                        early_termination: bool = True, *,
                        index: Optional[RadiusIndex] = None,
                        axes: Optional[AxesArrays] = None) -> ClusterRun:
    """Region-grow clusters over ellipsoidal neighborhoods.

    Seeds are taken in storage order and grown breadth-first. Reaching a
    point that already carries another cluster's ID records a merge edge;
    connected IDs are fused at the end and renumbered ``1..K`` by smallest
    member index. With ``early_termination`` a neighbor closer than the
    query's smallest semi-axis is treated as cluster interior and is not
    expanded itself.

    ``axes`` overrides the range-adaptive semi-axes (e.g. a constant sphere).
    """
    points = as_points(getattr(cloud, "points", cloud))
    n = len(points)
    if n == 0:
        raise ValueError("cannot cluster an empty point cloud")
    hood = EllipsoidNeighborhood(points, params, axes=axes, index=index)
    inner = hood.inner

    ids = np.zeros(n, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    graph = MergeGraph()
    queue: deque[int] = deque()

    for seed in range(n):
        if done[seed]:
            continue
        cur = graph.add()
        ids[seed] = cur
        queue.append(seed)
        while queue:
            iq = queue.popleft()
            if done[iq]:
                continue
            done[iq] = True
            nb, dist = hood.neighbors(iq)
            nb_ids = ids[nb]
            for other in np.unique(nb_ids[(nb_ids != 0) & (nb_ids != cur)]):
                graph.union(int(other), cur)
            open_ = ~done[nb]
            fresh = nb[open_]
            unlabeled = ids[fresh] == 0
            ids[fresh] = cur
            if early_termination:
                interior = dist[open_] <= inner[iq]
                done[fresh[interior]] = True
                queue.extend(fresh[~interior & unlabeled].tolist())
            else:
                queue.extend(fresh[unlabeled].tolist())

    labels = canonical_labels(graph.roots()[ids])
    return ClusterRun(labels, int(labels.max()), early_termination)


def brute_force_cluster(cloud, params: EllipsoidParams | None = None, *,
                        axes: Optional[AxesArrays] = None) -> ClusterRun:
    """Connected components of the symmetrized pairwise ellipsoid-membership graph."""
    points = as_points(getattr(cloud, "points", cloud))
    n = len(points)
    if n > BRUTE_FORCE_LIMIT:
        raise OracleSizeError(f"brute-force oracle is capped at {BRUTE_FORCE_LIMIT} points, got {n}")
    if n == 0:
        raise ValueError("cannot cluster an empty point cloud")
    if axes is None:
        axes = ellipsoid_axes_array(points, params)
    col = lambda v: np.asarray(v)[:, None]  # noqa: E731
    lhs = ellipsoid_lhs(points[:, None, :], col(np.cos(axes.lam)), col(np.sin(axes.lam)),
                        col(axes.a), col(axes.b), col(axes.c), points[None, :, :])
    adj = lhs <= 1.0
    adj |= adj.T
    rows, cols = np.nonzero(adj)
    graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    labels = canonical_labels(comp + 1)
    return ClusterRun(labels, int(labels.max()), False)


def euclidean_cluster(cloud, radius: float, *, index: Optional[RadiusIndex] = None) -> ClusterRun:
    """Fixed-radius region growing (closed ball)."""
    if not radius > 0:
        raise ValueError(f"radius must be > 0, got {radius}")
    points = as_points(getattr(cloud, "points", cloud))
    n = len(points)
    if n == 0:
        raise ValueError("cannot cluster an empty point cloud")
    index = index or RadiusIndex(points)
    neighbors = index.find_neighbors_many(points, radius)
    labels = np.zeros(n, dtype=np.int64)
    cur = 0
    for seed in range(n):
        if labels[seed]:
            continue
        cur += 1
        labels[seed] = cur
        queue = deque([seed])
        while queue:
            nb = neighbors[queue.popleft()]
            fresh = nb[labels[nb] == 0]
            labels[fresh] = cur
            queue.extend(fresh.tolist())
    return ClusterRun(labels, cur, False)
