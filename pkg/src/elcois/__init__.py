"""Open-world LiDAR instance segmentation with ellipsoidal clustering."""

from .clustering import (
    ClusterRun,
    MergeGraph,
    brute_force_cluster,
    canonical_labels,
    ellipsoidal_cluster,
    euclidean_cluster,
    in_ellipsoid,
)
from .core import ClassConfig, EllipsoidAxes, EllipsoidParams, PointCloud, ellipsoid_axes
from .io_kitti import LabelRecords, export_ply, read_labels, read_scan, write_labels
from .metrics import MatchTable, MetricReport, build_match_table, evaluate, iou_recall_at, s_assoc
from .pipeline import OisResult, PipelineConfig, ScanBundle, run_pipeline, split_points
from .refinement import KnownInstanceSet, diffuse_groups, refine_known
from .spatial import RadiusIndex

__version__ = "0.1.0"
