"""Closed-ball radius queries over a fixed point set."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .core import as_points


class RadiusIndex:
    """Kd-tree over an immutable cloud.

    ``find_neighbors`` returns every stored index within distance ``r`` of the
    query (boundary included), sorted ascending so callers iterate in a
    reproducible order.
    """

    def __init__(self, points):
        pts = as_points(points)
        if len(pts) == 0:
            raise ValueError("cannot index an empty point cloud")
        self.points = pts
        self.points.setflags(write=False)
        self._tree = cKDTree(pts, balanced_tree=True, compact_nodes=True)

    def __len__(self) -> int:
        return len(self.points)

    def find_neighbors(self, q, r: float) -> np.ndarray:
        if r < 0:
            raise ValueError(f"radius must be >= 0, got {r}")
        q = np.asarray(q, dtype=np.float64)
        idx = self._tree.query_ball_point(q, r, return_sorted=True)
        return np.asarray(idx, dtype=np.intp)

    def find_neighbors_many(self, qs, rs) -> list[np.ndarray]:
        """Batched ``find_neighbors``; ``rs`` is a scalar or one radius per query."""
        qs = np.asarray(qs, dtype=np.float64).reshape(-1, 3)
        if len(qs) == 0:
            return []
        rs = np.broadcast_to(np.asarray(rs, dtype=np.float64), (len(qs),))
        if np.any(rs < 0):
            raise ValueError("radii must be >= 0")
        found = self._tree.query_ball_point(qs, rs, return_sorted=True)
        return [np.asarray(idx, dtype=np.intp) for idx in found]


def build(cloud) -> RadiusIndex:
    points = getattr(cloud, "points", cloud)
    return RadiusIndex(points)
