"""Shared value types: point clouds, ellipsoid parameters and class sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

# Raw SemanticKITTI semantic IDs (before any learning-map remapping).
SEMANTICKITTI_BACKGROUND = frozenset({40, 44, 48, 49, 70, 72})
SEMANTICKITTI_THINGS = frozenset({10, 11, 15, 18, 20, 30, 31, 32})

CLASS_NAMES = {
    0: "unlabeled",
    10: "car",
    11: "bicycle",
    15: "motorcycle",
    18: "truck",
    20: "other-vehicle",
    30: "person",
    31: "bicyclist",
    32: "motorcyclist",
    40: "road",
    44: "parking",
    48: "sidewalk",
    49: "other-ground",
    50: "building",
    51: "fence",
    70: "vegetation",
    71: "trunk",
    72: "terrain",
    80: "pole",
    81: "traffic-sign",
}


def as_points(points) -> np.ndarray:
    """Coerce to a float64 ``(n, 3)`` array, rejecting non-finite coordinates."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array of points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    return arr


@dataclass(frozen=True)
class PointCloud:
    """Points in the sensor frame (meters) with an optional remission channel.

    Row ``i`` of every parallel array refers to the same physical point.
    """

    points: np.ndarray
    remission: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = as_points(self.points) if len(np.asarray(self.points)) else np.zeros((0, 3))
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.remission is not None:
            rem = np.asarray(self.remission, dtype=np.float32)
            if rem.shape != (len(pts),):
                raise ValueError(
                    f"remission has shape {rem.shape}, expected ({len(pts)},)"
                )
            rem.setflags(write=False)
            object.__setattr__(self, "remission", rem)

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, idx) -> "PointCloud":
        rem = None if self.remission is None else self.remission[idx]
        return PointCloud(self.points[idx], rem)


@dataclass(frozen=True)
class EllipsoidParams:
    """Scales of the range-adaptive ellipsoidal neighborhood.

    ``theta`` and ``phi`` are given in degrees and converted once.
    ``d_min`` floors the planar range so the lateral and vertical axes never
    collapse to zero for points right above the sensor.
    """

    rho: float = 2.0
    theta: float = 2.0
    phi: float = 7.5
    d_min: float = 0.001
    tan_half_theta: float = field(init=False, repr=False, compare=False)
    tan_half_phi: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("rho", "theta", "phi", "d_min"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
        if self.rho <= 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if not 0 < self.theta < 180:
            raise ValueError(f"theta must lie in (0, 180) degrees, got {self.theta}")
        if not 0 < self.phi < 180:
            raise ValueError(f"phi must lie in (0, 180) degrees, got {self.phi}")
        if self.d_min <= 0:
            raise ValueError(f"d_min must be > 0, got {self.d_min}")
        object.__setattr__(self, "tan_half_theta", math.tan(math.radians(self.theta) / 2))
        object.__setattr__(self, "tan_half_phi", math.tan(math.radians(self.phi) / 2))


class EllipsoidAxes(NamedTuple):
    a: float
    b: float
    c: float
    lam: float
    d: float


class AxesArrays(NamedTuple):
    """Per-point semi-axes, azimuth and planar range, one entry per point."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    lam: np.ndarray
    d: np.ndarray

    def radius(self) -> np.ndarray:
        return np.maximum(np.maximum(self.a, self.b), self.c)

    def inner_radius(self) -> np.ndarray:
        return np.minimum(np.minimum(self.a, self.b), self.c)

    def at(self, i: int) -> EllipsoidAxes:
        return EllipsoidAxes(*(float(arr[i]) for arr in self))


def ellipsoid_axes_array(points, params: EllipsoidParams) -> AxesArrays:
    pts = np.asarray(points, dtype=np.float64)
    d = np.hypot(pts[:, 0], pts[:, 1])
    lam = np.arctan2(pts[:, 1], pts[:, 0])
    dc = np.maximum(d, params.d_min)
    a = np.full(len(pts), params.rho / 2.0)
    return AxesArrays(a, params.tan_half_theta * dc, params.tan_half_phi * dc, lam, d)


def ellipsoid_axes(p, params: EllipsoidParams) -> EllipsoidAxes:
    """Semi-axes of the ellipsoid centred on ``p``.

    The radial axis is fixed at ``rho / 2``; the lateral and vertical axes
    grow linearly with the planar range of ``p``.

    >>> ax = ellipsoid_axes((10.0, 0.0, 0.0), EllipsoidParams())
    >>> round(ax.a, 6), round(ax.b, 6), round(ax.c, 6)
    (1.0, 0.174551, 0.655435)
    """
    return ellipsoid_axes_array(as_points(p), params).at(0)


@dataclass(frozen=True)
class ClassConfig:
    background_ids: frozenset = SEMANTICKITTI_BACKGROUND
    known_thing_ids: frozenset = SEMANTICKITTI_THINGS

    def __post_init__(self):
        bg = frozenset(int(i) for i in self.background_ids)
        things = frozenset(int(i) for i in self.known_thing_ids)
        overlap = bg & things
        if overlap:
            raise ValueError(f"background and thing classes overlap: {sorted(overlap)}")
        object.__setattr__(self, "background_ids", bg)
        object.__setattr__(self, "known_thing_ids", things)

    @classmethod
    def empty(cls) -> "ClassConfig":
        return cls(frozenset(), frozenset())
