"""SemanticKITTI binary formats and PLY export.

Scans are ``.bin`` files of little-endian float32 records ``(x, y, z, remission)``.
Labels are ``.label`` files of little-endian uint32; the low 16 bits hold the
semantic class and the high 16 bits the instance ID.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .core import PointCloud

SCAN_RECORD_BYTES = 16
LABEL_BYTES = 4
MAX_FIELD = 0xFFFF


class FormatError(ValueError):
    pass


class LabelOverflowError(ValueError):
    pass


@dataclass(frozen=True)
class LabelRecords:
    semantic: np.ndarray
    instance: np.ndarray

    def __post_init__(self):
        sem = np.asarray(self.semantic, dtype=np.int64).ravel()
        inst = np.asarray(self.instance, dtype=np.int64).ravel()
        if sem.shape != inst.shape:
            raise ValueError(
                f"semantic and instance lengths differ: {len(sem)} vs {len(inst)}"
            )
        object.__setattr__(self, "semantic", sem)
        object.__setattr__(self, "instance", inst)

    def __len__(self) -> int:
        return len(self.semantic)

    @classmethod
    def from_raw(cls, raw) -> "LabelRecords":
        raw = np.asarray(raw, dtype=np.uint32)
        return cls(raw & MAX_FIELD, raw >> 16)

    @property
    def raw(self) -> np.ndarray:
        for name, values in (("instance", self.instance), ("semantic", self.semantic)):
            bad = int(np.count_nonzero((values < 0) | (values > MAX_FIELD)))
            if bad:
                raise LabelOverflowError(
                    f"{bad} {name} value(s) outside [0, {MAX_FIELD}]"
                )
        return ((self.instance.astype(np.uint32) << 16) | self.semantic.astype(np.uint32))

    def __eq__(self, other):
        if not isinstance(other, LabelRecords):
            return NotImplemented
        return np.array_equal(self.semantic, other.semantic) and np.array_equal(
            self.instance, other.instance
        )

    __hash__ = None


def read_scan(path) -> PointCloud:
    size = os.path.getsize(path)
    residue = size % SCAN_RECORD_BYTES
    if residue:
        raise FormatError(
            f"{path}: size {size} is not a multiple of {SCAN_RECORD_BYTES} "
            f"({residue} trailing bytes)"
        )
    data = np.fromfile(path, dtype="<f4").reshape(-1, 4)
    return PointCloud(data[:, :3].astype(np.float64), data[:, 3])


def write_scan(cloud: PointCloud, path) -> None:
    rem = cloud.remission if cloud.remission is not None else np.zeros(len(cloud))
    data = np.empty((len(cloud), 4), dtype="<f4")
    data[:, :3] = cloud.points
    data[:, 3] = rem
    data.tofile(path)


def read_labels(path, n_points: int | None = None) -> LabelRecords:
    """Decode a ``.label`` file; ``n_points`` checks it against the paired scan."""
    size = os.path.getsize(path)
    if size % LABEL_BYTES:
        raise FormatError(
            f"{path}: size {size} is not a multiple of {LABEL_BYTES} "
            f"({size % LABEL_BYTES} trailing bytes)"
        )
    if n_points is not None and size != LABEL_BYTES * n_points:
        raise FormatError(
            f"{path}: holds {size // LABEL_BYTES} labels but the scan has {n_points} points"
        )
    return LabelRecords.from_raw(np.fromfile(path, dtype="<u4"))


def write_labels(records: LabelRecords, path) -> None:
    records.raw.astype("<u4").tofile(path)


def instance_color(ids) -> np.ndarray:
    """Deterministic RGB per instance ID; ID 0 is gray."""
    ids = np.asarray(ids, dtype=np.uint64)
    # splitmix64 finalizer
    with np.errstate(over="ignore"):
        h = ids + np.uint64(0x9E3779B97F4A7C15)
        h = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        h = (h ^ (h >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        h = h ^ (h >> np.uint64(31))
    rgb = np.stack(
        [(h >> np.uint64(s)) & np.uint64(0xFF) for s in (0, 8, 16)], axis=1
    ).astype(np.uint8)
    # one saturated channel keeps instances distinct from background gray
    hot = ((h >> np.uint64(24)) % np.uint64(3)).astype(np.intp)
    rgb[np.arange(len(rgb)), hot] = 255
    rgb[ids == 0] = (128, 128, 128)
    return rgb


def export_ply(cloud: PointCloud, labeling, path) -> None:
    labeling = np.asarray(labeling)
    if len(labeling) != len(cloud):
        raise ValueError(
            f"labeling has {len(labeling)} entries but the cloud has {len(cloud)} points"
        )
    rgb = instance_color(labeling)
    header = (
        "ply\n"
        "format ascii 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "property uchar red\n"
        "property uchar green\n"
        "property uchar blue\n"
        "end_header\n"
    )
    with open(path, "w", newline="\n") as f:
        f.write(header)
        pts = cloud.points.astype(np.float32)
        for (x, y, z), (r, g, b) in zip(pts.tolist(), rgb.tolist()):
            f.write(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}\n")
