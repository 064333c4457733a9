"""Axis-aligned box arithmetic, IoU, and one-to-one detection/ground-truth matching.

Boxes use inclusive-exclusive integer pixel coordinates: a box covers columns
x0..x1-1 and rows y0..y1-1. All areas are computed in exact integer arithmetic
so matching is deterministic across platforms.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class BBox:
    """Axis-aligned pixel box, inclusive-exclusive, with positive area."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        if not all(isinstance(v, int) for v in (self.x0, self.y0, self.x1, self.y1)):
            raise TypeError(f"box coordinates must be integers, got {self!r}")
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValueError(f"invalid box: need 0 <= x0 < x1 and 0 <= y0 < y1, got {self!r}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def intersection_area(self, other: BBox) -> int:
        iw = min(self.x1, other.x1) - max(self.x0, other.x0)
        ih = min(self.y1, other.y1) - max(self.y0, other.y0)
        if iw <= 0 or ih <= 0:
            return 0
        return iw * ih

    def expand(self, pad: int, width: int, height: int) -> BBox:
        """Grow by `pad` on every side, clipped to a width x height canvas."""
        return BBox(
            max(0, self.x0 - pad),
            max(0, self.y0 - pad),
            min(width, self.x1 + pad),
            min(height, self.y1 + pad),
        )

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass
class Matching:
    """One-to-one pairing of detection and ground-truth indices.

    Each index appears in at most one pair; every pair carries the IoU it was
    accepted at, which is always >= the matching threshold.
    """

    pairs: list[tuple[int, int, float]]
    unmatched_detections: list[int]
    unmatched_ground_truths: list[int]


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0.0 when disjoint.

    Intersection and union areas are exact integers; the single division at
    the end is the only floating-point step.
    """
    inter = a.intersection_area(b)
    if inter == 0:
        return 0.0
    union = a.area + b.area - inter
    return inter / union


def match_boxes(detections: list[BBox], ground_truths: list[BBox], threshold: float) -> Matching:
    """Greedy one-to-one matching by descending IoU.

    All (detection, ground truth) pairs with IoU >= threshold are sorted by
    descending IoU, ties broken by lower detection index then lower ground
    truth index, and accepted greedily while both sides are free. The result
    is deterministic for fixed inputs.
    """
    if not (0.0 < threshold <= 1.0):
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")

    candidates: list[tuple[float, int, int]] = []
    for di, det in enumerate(detections):
        for gi, gt in enumerate(ground_truths):
            score = iou(det, gt)
            if score >= threshold:
                candidates.append((score, di, gi))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))

    used_det: set[int] = set()
    used_gt: set[int] = set()
    pairs: list[tuple[int, int, float]] = []
    for score, di, gi in candidates:
        if di in used_det or gi in used_gt:
            continue
        used_det.add(di)
        used_gt.add(gi)
        pairs.append((di, gi, score))

    unmatched_det = [i for i in range(len(detections)) if i not in used_det]
    unmatched_gt = [i for i in range(len(ground_truths)) if i not in used_gt]
    return Matching(pairs=pairs, unmatched_detections=unmatched_det, unmatched_ground_truths=unmatched_gt)
