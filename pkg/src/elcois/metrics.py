"""Open-world instance segmentation scores.

All scores are computed from a :class:`MatchTable` of ground-truth /
prediction overlap counts. Tables from several scans can be pooled with
:meth:`MatchTable.concat` before scoring.

Ground-truth instances are the points with a non-zero GT instance ID, keyed
by their (semantic, instance) pair. Prediction sizes count every point of
the predicted instance, so a cluster that leaks into unlabeled points pays
for it in the union.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .core import CLASS_NAMES, SEMANTICKITTI_THINGS

GROUPS = ("known", "unknown", "all")
DEFAULT_THRESHOLDS = (0.9, 0.7, 0.5)


@dataclass
class MatchTable:
    gt_sizes: np.ndarray
    gt_class: np.ndarray
    gt_known: np.ndarray
    pred_sizes: np.ndarray
    pair_gt: np.ndarray
    pair_pred: np.ndarray
    pair_count: np.ndarray

    @property
    def n_gt(self) -> int:
        return len(self.gt_sizes)

    def overlap(self, g: int, p: int) -> int:
        hit = (self.pair_gt == g) & (self.pair_pred == p)
        return int(self.pair_count[hit].sum())

    def pair_iou(self) -> np.ndarray:
        inter = self.pair_count.astype(np.float64)
        union = self.gt_sizes[self.pair_gt] + self.pred_sizes[self.pair_pred] - inter
        return inter / union

    def select(self, group) -> np.ndarray:
        """Boolean mask over GT instances: a group name or a semantic class ID."""
        if group == "all":
            return np.ones(self.n_gt, dtype=bool)
        if group == "known":
            return self.gt_known.copy()
        if group == "unknown":
            return ~self.gt_known
        return self.gt_class == int(group)

    @classmethod
    def concat(cls, tables: Iterable["MatchTable"]) -> "MatchTable":
        tables = list(tables)
        if not tables:
            return empty_table()
        g_off = np.cumsum([0] + [t.n_gt for t in tables[:-1]])
        p_off = np.cumsum([0] + [len(t.pred_sizes) for t in tables[:-1]])
        return cls(
            np.concatenate([t.gt_sizes for t in tables]),
            np.concatenate([t.gt_class for t in tables]),
            np.concatenate([t.gt_known for t in tables]),
            np.concatenate([t.pred_sizes for t in tables]),
            np.concatenate([t.pair_gt + o for t, o in zip(tables, g_off)]),
            np.concatenate([t.pair_pred + o for t, o in zip(tables, p_off)]),
            np.concatenate([t.pair_count for t in tables]),
        )


def empty_table() -> MatchTable:
    z = np.zeros(0, dtype=np.int64)
    return MatchTable(z, z, np.zeros(0, dtype=bool), z, z, z, z)


def build_match_table(gt_semantic, gt_instance, pred_instance, *,
                      known_ids=SEMANTICKITTI_THINGS, eval_mask=None) -> MatchTable:
    gt_semantic = np.asarray(gt_semantic, dtype=np.int64)
    gt_instance = np.asarray(gt_instance, dtype=np.int64)
    pred_instance = np.asarray(pred_instance, dtype=np.int64)
    n = len(gt_instance)
    if len(gt_semantic) != n or len(pred_instance) != n:
        raise ValueError(
            f"length mismatch: gt {len(gt_semantic)}/{n} points, prediction {len(pred_instance)}"
        )
    mask = gt_instance >= 1
    if eval_mask is not None:
        eval_mask = np.asarray(eval_mask, dtype=bool)
        if eval_mask.shape != (n,):
            raise ValueError(f"eval_mask has shape {eval_mask.shape}, expected ({n},)")
        mask &= eval_mask

    gt_keys, gt_inv = np.unique((gt_instance[mask] << 16) | gt_semantic[mask], return_inverse=True)
    gt_sizes = np.bincount(gt_inv, minlength=len(gt_keys))
    gt_class = gt_keys & 0xFFFF
    gt_known = np.isin(gt_class, list(known_ids))

    pred_keys, pred_sizes = np.unique(pred_instance[pred_instance >= 1], return_counts=True)

    hit = pred_instance[mask] >= 1
    g = gt_inv[hit]
    p = np.searchsorted(pred_keys, pred_instance[mask][hit])
    pairs, counts = np.unique(np.stack([g, p], axis=1).reshape(-1, 2), axis=0, return_counts=True)
    return MatchTable(
        gt_sizes.astype(np.int64), gt_class.astype(np.int64), gt_known,
        pred_sizes.astype(np.int64),
        pairs[:, 0].astype(np.int64), pairs[:, 1].astype(np.int64), counts.astype(np.int64),
    )


def per_gt_association(table: MatchTable) -> np.ndarray:
    """For each GT instance: sum over overlapping predictions of overlap * IoU, over its size."""
    contrib = table.pair_count * table.pair_iou()
    return np.bincount(table.pair_gt, weights=contrib, minlength=table.n_gt) / table.gt_sizes


def per_gt_best_iou(table: MatchTable) -> np.ndarray:
    best = np.zeros(table.n_gt)
    np.maximum.at(best, table.pair_gt, table.pair_iou())
    return best


def s_assoc(table: MatchTable, group="all") -> Optional[float]:
    """Association score of a group; ``None`` when the group has no GT instance."""
    sel = table.select(group)
    if not sel.any():
        return None
    return float(per_gt_association(table)[sel].mean())


def iou_recall_at(table: MatchTable, tau: float, group="all") -> Optional[tuple[float, float]]:
    """Mean thresholded best IoU and the fraction of GT instances matched at ``tau``."""
    if not 0 < tau <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {tau}")
    sel = table.select(group)
    if not sel.any():
        return None
    best = per_gt_best_iou(table)[sel]
    hit = best >= tau
    return float(np.where(hit, best, 0.0).mean()), float(hit.mean())


@dataclass
class MetricReport:
    s_assoc: dict[str, float] = field(default_factory=dict)
    iou_at: dict[str, dict[float, float]] = field(default_factory=dict)
    recall_at: dict[str, dict[float, float]] = field(default_factory=dict)
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    class_columns: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "s_assoc": self.s_assoc,
            "iou": {g: {f"{t:g}": v for t, v in d.items()} for g, d in self.iou_at.items()},
            "recall": {g: {f"{t:g}": v for t, v in d.items()} for g, d in self.recall_at.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        def cell(v):
            return "-" if v is None else f"{v:.3f}"

        cols = list(self.class_columns) + list(GROUPS)
        width = max(8, *(len(c) for c in cols)) + 1
        lines = ["S_assoc", "".join(c.rjust(width) for c in cols),
                 "".join(cell(self.s_assoc.get(c)).rjust(width) for c in cols), ""]
        head = ["threshold".ljust(10)] + [
            f"{kind} {g}".rjust(16) for kind in ("IoU", "Recall") for g in GROUPS[:2]
        ]
        lines.append("".join(head))
        for t in self.thresholds:
            row = [f"{t:.0%}".ljust(10)]
            for source in (self.iou_at, self.recall_at):
                row += [cell(source.get(g, {}).get(t)).rjust(16) for g in GROUPS[:2]]
            lines.append("".join(row))
        return "\n".join(lines) + "\n"


def _class_name(cid: int) -> str:
    return CLASS_NAMES.get(cid, str(cid))


def evaluate(table: MatchTable, thresholds=DEFAULT_THRESHOLDS,
             class_ids: Iterable[int] = sorted(SEMANTICKITTI_THINGS)) -> MetricReport:
    """Score a (possibly pooled) table. Groups without GT instances are omitted."""
    thresholds = tuple(float(t) for t in thresholds)
    report = MetricReport(thresholds=thresholds,
                          class_columns=tuple(_class_name(c) for c in class_ids))
    for cid in class_ids:
        v = s_assoc(table, cid)
        if v is not None:
            report.s_assoc[_class_name(cid)] = v
    for group in GROUPS:
        v = s_assoc(table, group)
        if v is None:
            continue
        report.s_assoc[group] = v
        report.iou_at[group] = {}
        report.recall_at[group] = {}
        for t in thresholds:
            iou, rec = iou_recall_at(table, t, group)
            report.iou_at[group][t] = iou
            report.recall_at[group][t] = rec
    return report


def evaluate_per_scan(tables: Iterable[MatchTable], thresholds=DEFAULT_THRESHOLDS,
                      class_ids: Iterable[int] = sorted(SEMANTICKITTI_THINGS)) -> MetricReport:
    """Average each score over the scans where it is defined."""
    class_ids = list(class_ids)
    reports = [evaluate(t, thresholds, class_ids) for t in tables]
    out = MetricReport(thresholds=tuple(float(t) for t in thresholds),
                       class_columns=tuple(_class_name(c) for c in class_ids))
    keys = {k for r in reports for k in r.s_assoc}
    for k in keys:
        out.s_assoc[k] = float(np.mean([r.s_assoc[k] for r in reports if k in r.s_assoc]))
    for attr in ("iou_at", "recall_at"):
        dst = getattr(out, attr)
        for g in GROUPS:
            have = [getattr(r, attr)[g] for r in reports if g in getattr(r, attr)]
            if have:
                dst[g] = {t: float(np.mean([h[t] for h in have])) for t in out.thresholds}
    return out
