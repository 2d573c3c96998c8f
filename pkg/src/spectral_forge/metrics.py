"""Segmentation metrics (DSC, NSD) and hierarchical score aggregation.

Scores are computed per (image, class), macro-averaged over the images of one
subject and then over subjects; the grand mean averages the per-class values.
Classes missing from both masks yield no score at all (absent, not zero), and
aggregation skips absences at every level.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import ClassMismatch, DataError, DimensionMismatch, EmptyInput
from .labels import LabelSet
from .scene import SemanticMask

DEFAULT_NSD_TOLERANCE_PX = 2.0
NEGLIGIBLE_DELTA = 0.01


@dataclass(frozen=True)
class ClassImageScore:
    """One class-level metric value for one image (the aggregation leaf)."""

    image_id: str
    subject_id: str
    class_id: int
    metric: str  # "DSC" or "NSD"
    value: Optional[float]

    def __post_init__(self):
        if self.metric not in ("DSC", "NSD"):
            raise DataError(f"unknown metric {self.metric!r}")
        if self.value is not None and not 0.0 <= self.value <= 1.0:
            raise DataError(f"metric value {self.value} outside [0, 1]")


@dataclass(frozen=True)
class NsdThresholds:
    """Per-class boundary tolerances in pixels."""

    default: float = DEFAULT_NSD_TOLERANCE_PX
    per_class: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.default < 0 or any(v < 0 for v in self.per_class.values()):
            raise DataError("NSD tolerances must be non-negative")

    def for_class(self, class_id: int) -> float:
        return float(self.per_class.get(class_id, self.default))

    @classmethod
    def from_json_payload(cls, payload: dict, label_set: Optional[LabelSet] = None
                          ) -> "NsdThresholds":
        """Accepts {"default": t, "per_class": {"<id or name>": t, ...}}."""
        per_class = {}
        for key, val in payload.get("per_class", {}).items():
            if isinstance(key, str) and not key.isdigit():
                if label_set is None:
                    raise DataError(f"class name {key!r} needs a label set to resolve")
                per_class[label_set.id_of(key)] = float(val)
            else:
                per_class[int(key)] = float(val)
        return cls(default=float(payload.get("default", DEFAULT_NSD_TOLERANCE_PX)),
                   per_class=per_class)


def _require_same_shape(pred: SemanticMask, ref: SemanticMask):
    if pred.labels.shape != ref.labels.shape:
        raise DimensionMismatch(
            f"pred {pred.labels.shape} vs ref {ref.labels.shape}"
        )


def dsc(pred: SemanticMask, ref: SemanticMask, class_id: int) -> Optional[float]:
    """Dice similarity 2|P & R| / (|P| + |R|); None when the class is in neither mask."""
    _require_same_shape(pred, ref)
    p = pred.labels == class_id
    r = ref.labels == class_id
    denom = int(p.sum()) + int(r.sum())
    if denom == 0:
        return None
    return 2.0 * int((p & r).sum()) / denom


def boundary_pixels(fg: np.ndarray) -> np.ndarray:
    """Foreground pixels with a non-foreground 4-neighbor; the image border
    counts as outside."""
    padded = np.pad(fg, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return fg & ~interior


def _boundary_hits(src: np.ndarray, dst: np.ndarray, tau: float) -> int:
    """How many boundary pixels of src lie within tau of dst's boundary.

    Distances are compared as exact integer squares (via the feature
    transform's nearest-pixel indices), so threshold ties cannot flip on
    floating-point rounding.
    """
    nearest = ndimage.distance_transform_edt(
        ~dst, return_distances=False, return_indices=True
    )
    ys, xs = np.nonzero(src)
    dy = ys.astype(np.int64) - nearest[0][ys, xs]
    dx = xs.astype(np.int64) - nearest[1][ys, xs]
    return int(((dy * dy + dx * dx) <= tau * tau).sum())


def nsd(pred: SemanticMask, ref: SemanticMask, class_id: int, tau: float
        ) -> Optional[float]:
    """Normalized surface distance at tolerance tau (pixels, Euclidean).

    Fraction of boundary pixels of each mask lying within tau of the other
    mask's boundary. None when the class is in neither mask; 0.0 when it is in
    exactly one.
    """
    _require_same_shape(pred, ref)
    if tau < 0:
        raise DataError("tau must be non-negative")
    bp = boundary_pixels(pred.labels == class_id)
    br = boundary_pixels(ref.labels == class_id)
    np_, nr = int(bp.sum()), int(br.sum())
    if np_ == 0 and nr == 0:
        return None
    if np_ == 0 or nr == 0:
        return 0.0
    hits = _boundary_hits(bp, br, tau) + _boundary_hits(br, bp, tau)
    return hits / (np_ + nr)


def score_pair(
    pred: SemanticMask,
    ref: SemanticMask,
    image_id: str,
    subject_id: str,
    metrics: Sequence[str] = ("DSC", "NSD"),
    thresholds: Optional[NsdThresholds] = None,
    class_ids: Optional[Sequence[int]] = None,
) -> list[ClassImageScore]:
    """All class-level scores for one (prediction, reference) pair.

    Classes absent from both masks are skipped entirely (no leaf emitted).
    """
    thresholds = thresholds or NsdThresholds()
    if class_ids is None:
        class_ids = ref.label_set.ids
    out = []
    for metric in metrics:
        for cid in class_ids:
            if metric == "DSC":
                value = dsc(pred, ref, cid)
            else:
                value = nsd(pred, ref, cid, thresholds.for_class(cid))
            if value is not None:
                out.append(ClassImageScore(image_id=image_id, subject_id=subject_id,
                                           class_id=cid, metric=metric, value=value))
    return out


# --- hierarchical aggregation -------------------------------------------------


@dataclass(frozen=True)
class MetricReport:
    """All aggregation levels for one metric on one dataset/algorithm."""

    metric: str
    leaves: tuple[ClassImageScore, ...]
    per_subject_class: Mapping[tuple[str, int], float]
    per_class: Mapping[int, float]
    grand_mean: Optional[float]

    def class_values(self, class_ids: Sequence[int]) -> list[Optional[float]]:
        return [self.per_class.get(cid) for cid in class_ids]

    def to_dict(self) -> dict:
        per_subject: dict = {}
        for (subject, cid), val in sorted(self.per_subject_class.items()):
            per_subject.setdefault(subject, {})[str(cid)] = val
        return {
            "metric": self.metric,
            "per_image": [
                {
                    "image_id": s.image_id,
                    "subject_id": s.subject_id,
                    "class_id": s.class_id,
                    "value": s.value,
                }
                for s in self.leaves
            ],
            "per_subject_class": per_subject,
            "per_class": {str(c): v for c, v in sorted(self.per_class.items())},
            "grand_mean": self.grand_mean,
        }


def aggregate(scores: Iterable[ClassImageScore]) -> MetricReport:
    """Macro-average per class over a subject's images, then over subjects.

    A subject without any present value for a class simply drops out of that
    class's mean; the grand mean averages the surviving per-class values.
    """
    scores = tuple(scores)
    if not scores:
        raise EmptyInput("no scores to aggregate")
    metrics = {s.metric for s in scores}
    if len(metrics) > 1:
        raise DataError(f"mixed metrics in one aggregation: {sorted(metrics)}")

    # leaf groups are averaged in sorted order, so aggregation is exactly
    # permutation-invariant in the input list
    by_subject_class: dict[tuple[str, int], list[float]] = {}
    for s in scores:
        if s.value is not None:
            by_subject_class.setdefault((s.subject_id, s.class_id), []).append(s.value)
    per_subject_class = {
        key: float(np.mean(sorted(vals))) for key, vals in by_subject_class.items()
    }

    by_class: dict[int, list[float]] = {}
    for (subject, cid) in sorted(per_subject_class):
        by_class.setdefault(cid, []).append(per_subject_class[(subject, cid)])
    per_class = {cid: float(np.mean(vals)) for cid, vals in by_class.items()}

    grand = (float(np.mean([per_class[c] for c in sorted(per_class)]))
             if per_class else None)
    return MetricReport(
        metric=metrics.pop(),
        leaves=scores,
        per_subject_class=per_subject_class,
        per_class=per_class,
        grand_mean=grand,
    )


def aggregate_removal(
    scores_by_removed: Mapping[int, Sequence[ClassImageScore]]
) -> MetricReport:
    """Aggregate removal experiments: per (image, class) keep the minimum over
    all removed neighbours, i.e. the score after losing the most important
    neighbour, then aggregate hierarchically as usual."""
    if not scores_by_removed:
        raise EmptyInput("no removal variants to aggregate")
    worst: dict[tuple[str, int], ClassImageScore] = {}
    for removed, scores in sorted(scores_by_removed.items()):
        for s in scores:
            if s.value is None:
                continue
            key = (s.image_id, s.class_id)
            held = worst.get(key)
            if held is None or s.value < held.value:
                worst[key] = s
    if not worst:
        raise EmptyInput("no present scores across removal variants")
    return aggregate(tuple(worst[k] for k in sorted(worst)))


@dataclass(frozen=True)
class RemovalImpactMatrix:
    """Change in aggregated DSC of each observed class when a class is removed."""

    removed_ids: tuple[int, ...]
    observed_ids: tuple[int, ...]
    delta: Mapping[tuple[int, int], float]  # (removed, observed) -> change

    def is_negligible(self, removed: int, observed: int) -> Optional[bool]:
        val = self.delta.get((removed, observed))
        return None if val is None else abs(val) < NEGLIGIBLE_DELTA

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["removed\\observed"] + [str(c) for c in self.observed_ids])
            for r in self.removed_ids:
                row = [str(r)]
                for l in self.observed_ids:
                    val = self.delta.get((r, l))
                    row.append("" if val is None else repr(val))
                writer.writerow(row)


def removal_impact_matrix(
    baseline: MetricReport,
    scores_by_removed: Mapping[int, Sequence[ClassImageScore]],
) -> RemovalImpactMatrix:
    """Entry (r, l): aggregated score of class l under removal of r, minus the
    baseline aggregate of l. The diagonal is undefined (a removed organ is not
    observed) and classes unknown to the baseline raise ClassMismatch."""
    if not scores_by_removed:
        raise EmptyInput("no removal variants")
    delta: dict[tuple[int, int], float] = {}
    observed: set[int] = set()
    for removed, scores in sorted(scores_by_removed.items()):
        if not scores:
            continue
        report = aggregate(scores)
        for l, val in report.per_class.items():
            if l == removed:
                continue
            if l not in baseline.per_class:
                raise ClassMismatch(
                    f"class {l} scored under removal of {removed} "
                    "but missing from the baseline report"
                )
            observed.add(l)
            delta[(removed, l)] = val - baseline.per_class[l]
    return RemovalImpactMatrix(
        removed_ids=tuple(sorted(scores_by_removed)),
        observed_ids=tuple(sorted(observed)),
        delta=delta,
    )
