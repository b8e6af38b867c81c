"""Open-world segmentation of a single scan.

Background points are dropped by semantic class, known instances from the
close-set panoptic prediction are refined, and whatever is left is
clustered into unknown instances. Known instances get the low IDs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .clustering import canonical_labels, ellipsoidal_cluster, euclidean_cluster
from .core import ClassConfig, EllipsoidParams, PointCloud
from .io_kitti import LabelRecords
from .refinement import DEFAULT_DIFFUSE_RADIUS, KnownInstanceSet, refine_known

log = logging.getLogger(__name__)

KNOWN = "known"
UNKNOWN = "unknown"
ALGORITHMS = ("elc", "euclidean")


@dataclass(frozen=True)
class ScanBundle:
    cloud: PointCloud
    semantic: np.ndarray
    instance: np.ndarray

    def __post_init__(self):
        sem = np.asarray(self.semantic, dtype=np.int64)
        inst = np.asarray(self.instance, dtype=np.int64)
        n = len(self.cloud)
        if sem.shape != (n,) or inst.shape != (n,):
            raise ValueError(
                f"label arrays {sem.shape}/{inst.shape} do not match {n} points"
            )
        object.__setattr__(self, "semantic", sem)
        object.__setattr__(self, "instance", inst)

    @classmethod
    def from_records(cls, cloud: PointCloud, records: LabelRecords) -> "ScanBundle":
        return cls(cloud, records.semantic, records.instance)

    def __len__(self) -> int:
        return len(self.cloud)


@dataclass(frozen=True)
class PipelineConfig:
    params: EllipsoidParams = field(default_factory=EllipsoidParams)
    classes: ClassConfig = field(default_factory=ClassConfig)
    diffuse_r: float = DEFAULT_DIFFUSE_RADIUS
    refine_known: bool = True
    unknown_min_points: int = 10
    early_termination: bool = True
    algo: str = "elc"
    euclidean_radius: float | None = None

    def __post_init__(self):
        if self.unknown_min_points < 1:
            raise ValueError(f"unknown_min_points must be >= 1, got {self.unknown_min_points}")
        if not self.diffuse_r > 0:
            raise ValueError(f"diffuse_r must be > 0, got {self.diffuse_r}")
        if self.algo not in ALGORITHMS:
            raise ValueError(f"algo must be one of {ALGORITHMS}, got {self.algo!r}")
        if self.euclidean_radius is not None and not self.euclidean_radius > 0:
            raise ValueError(f"euclidean radius must be > 0, got {self.euclidean_radius}")

    @property
    def radius(self) -> float:
        # the baseline searches half of the fixed radial axis
        return self.euclidean_radius if self.euclidean_radius is not None else self.params.rho / 2


class PointSplit(NamedTuple):
    background: np.ndarray
    known: np.ndarray
    known_ids: np.ndarray
    unknown: np.ndarray


@dataclass
class OisResult:
    labels: np.ndarray
    semantic: np.ndarray
    provenance: dict[int, str]

    @property
    def n_known(self) -> int:
        return sum(1 for tag in self.provenance.values() if tag == KNOWN)

    @property
    def n_unknown(self) -> int:
        return sum(1 for tag in self.provenance.values() if tag == UNKNOWN)

    def to_records(self) -> LabelRecords:
        return LabelRecords(self.semantic, self.labels)


def split_points(scan: ScanBundle, classes: ClassConfig) -> PointSplit:
    """Partition scan indices into background, known-instance and candidate-unknown.

    A known instance is identified by its (semantic, instance) pair so two
    predicted objects of different classes sharing an instance number stay
    apart. Thing-class points without an instance are candidate-unknown.
    """
    background = np.isin(scan.semantic, list(classes.background_ids))
    known = (
        ~background
        & (scan.instance >= 1)
        & np.isin(scan.semantic, list(classes.known_thing_ids))
    )
    unknown = ~background & ~known
    known_idx = np.flatnonzero(known)
    keys = (scan.instance[known_idx] << 16) | scan.semantic[known_idx]
    return PointSplit(
        np.flatnonzero(background),
        known_idx,
        canonical_labels(keys, keep_zero=False),
        np.flatnonzero(unknown),
    )


def _cluster(points: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    if cfg.algo == "euclidean":
        return euclidean_cluster(points, cfg.radius).labels
    return ellipsoidal_cluster(points, cfg.params, cfg.early_termination).labels


def cluster_unknown(points: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """Cluster candidate-unknown points, zeroing clusters below the size floor."""
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64)
    labels = _cluster(points, cfg)
    sizes = np.bincount(labels)
    labels = np.where(sizes[labels] >= cfg.unknown_min_points, labels, 0)
    return canonical_labels(labels)


def refine_or_pass(points: np.ndarray, known_ids: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    if len(known_ids) == 0:
        return np.zeros(0, dtype=np.int64)
    if cfg.refine_known:
        known = KnownInstanceSet(points, known_ids, cfg.diffuse_r)
        labels = refine_known(known, cfg.params, cfg.early_termination)
    else:
        labels = known_ids
    return canonical_labels(labels)


def run_pipeline(scan: ScanBundle, cfg: PipelineConfig | None = None) -> OisResult:
    cfg = cfg or PipelineConfig()
    n = len(scan)
    labels = np.zeros(n, dtype=np.int64)
    if n == 0:
        return OisResult(labels, scan.semantic.copy(), {})
    pts = scan.cloud.points
    split = split_points(scan, cfg.classes)

    known_labels = refine_or_pass(pts[split.known], split.known_ids, cfg)
    n_known = int(known_labels.max(initial=0))
    labels[split.known] = known_labels

    unknown_labels = cluster_unknown(pts[split.unknown], cfg)
    n_unknown = int(unknown_labels.max(initial=0))
    labels[split.unknown] = np.where(unknown_labels > 0, unknown_labels + n_known, 0)

    provenance = {i: KNOWN for i in range(1, n_known + 1)}
    provenance.update({n_known + i: UNKNOWN for i in range(1, n_unknown + 1)})
    log.debug(
        "%d points: %d background, %d known -> %d instances, %d candidate-unknown -> %d instances",
        n, len(split.background), len(split.known), n_known, len(split.unknown), n_unknown,
    )
    return OisResult(labels, scan.semantic.copy(), provenance)
