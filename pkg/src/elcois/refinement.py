"""Healing over-segmented known instances by diffuse searching.

Known instances whose points come within a fixed radius of each other are
gathered transitively into groups, and every group is re-clustered with
ellipsoidal clustering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ellipsoidal_cluster
from .core import EllipsoidParams, as_points
from .spatial import RadiusIndex

DEFAULT_DIFFUSE_RADIUS = 1.0


@dataclass(frozen=True)
class KnownInstanceSet:
    points: np.ndarray
    ids: np.ndarray
    r: float = DEFAULT_DIFFUSE_RADIUS

    def __post_init__(self):
        pts = as_points(self.points) if len(self.points) else np.zeros((0, 3))
        ids = np.asarray(self.ids, dtype=np.int64)
        if ids.shape != (len(pts),):
            raise ValueError(f"ids has shape {ids.shape}, expected ({len(pts)},)")
        if np.any(ids < 1):
            raise ValueError("every known point needs an instance ID >= 1")
        if not self.r > 0:
            raise ValueError(f"diffuse radius must be > 0, got {self.r}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "ids", ids)


def diffuse_groups(known: KnownInstanceSet, index: RadiusIndex | None = None) -> list[list[int]]:
    """Partition the instance IDs into transitively touching groups.

    Groups are listed in order of their smallest ID; IDs within a group
    ascend.
    """
    if len(known.ids) == 0:
        return []
    index = index or RadiusIndex(known.points)
    order = np.argsort(known.ids, kind="stable")
    uniq, starts = np.unique(known.ids[order], return_index=True)
    members = dict(zip(uniq.tolist(), np.split(order, starts[1:])))
    remaining = dict.fromkeys(uniq.tolist())  # insertion-ordered set

    groups = []
    while remaining:
        seed = next(iter(remaining))
        del remaining[seed]
        group = [seed]
        frontier = [seed]
        while frontier:
            query = np.concatenate([members[j] for j in frontier])
            found = index.find_neighbors_many(known.points[query], known.r)
            touched = np.unique(known.ids[np.unique(np.concatenate(found))])
            frontier = [j for j in touched.tolist() if j in remaining]
            for j in frontier:
                del remaining[j]
            group.extend(frontier)
        groups.append(sorted(group))
    return groups


def refine_known(known: KnownInstanceSet, params: EllipsoidParams,
                 early_termination: bool = True) -> np.ndarray:
    """Re-cluster every diffuse group; returns labels ``1..K`` over the known points.

    Labels are unique across groups. A group may end up with fewer or more
    instances than it started with.
    """
    labels = np.zeros(len(known.ids), dtype=np.int64)
    if len(labels) == 0:
        return labels
    index = RadiusIndex(known.points)
    offset = 0
    for group in diffuse_groups(known, index):
        sub = np.flatnonzero(np.isin(known.ids, group))
        run = ellipsoidal_cluster(known.points[sub], params, early_termination)
        labels[sub] = run.labels + offset
        offset += run.n_clusters
    return labels


def majority_semantics(labels, semantic) -> dict[int, int]:
    """Most frequent semantic class per instance label; ties go to the smaller class ID."""
    labels = np.asarray(labels, dtype=np.int64)
    semantic = np.asarray(semantic, dtype=np.int64)
    out = {}
    mask = labels > 0
    if not mask.any():
        return out
    pairs, counts = np.unique(np.stack([labels[mask], semantic[mask]], axis=1),
                              axis=0, return_counts=True)
    # pairs are sorted by (label, class): the first maximum is the smallest class
    for lab in np.unique(pairs[:, 0]):
        rows = np.flatnonzero(pairs[:, 0] == lab)
        out[int(lab)] = int(pairs[rows[np.argmax(counts[rows])], 1])
    return out
