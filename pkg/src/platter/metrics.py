"""Quantitative evaluation: detection P/R/F1 over IoU thresholds, isolated and
end-to-end character/word recognition rates, and per-word latency statistics.

All aggregation is micro-averaged: integer counters are summed over every page
first and ratios are computed once at the end, so page order and parallel
evaluation cannot change the results.

Conventions (pinned for reproducibility):
- precision/recall are 0 when their denominator is 0; F1 is 0 when P+R = 0.
- CRR = 100 * max(0, 1 - total edit distance / total ground-truth codepoints).
- WRR = 100 * exact matches / total ground-truth words, compared after NFC.
- End-to-end association pairs each detection with the ground-truth box of
  maximum raw overlap area (greedy, one-to-one, zero overlap forbidden);
  unmatched ground truth counts as fully deleted, unmatched detections are
  tallied as spurious and excluded from CRR/WRR.
"""
from __future__ import annotations

import statistics
import unicodedata
from dataclasses import dataclass, field

from platter.composer import PageLabel
from platter.geometry import BBox, match_boxes
from platter.pipeline import PageResult


class ZeroWords(Exception):
    """Latency statistics were requested for a corpus with no recognized words."""


@dataclass(frozen=True)
class ThresholdScores:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass
class DetectionMetrics:
    per_threshold: dict[float, ThresholdScores] = field(default_factory=dict)


@dataclass
class RecognitionMetrics:
    crr: float
    wrr: float
    gt_char_total: int
    edit_total: int
    gt_word_total: int
    exact_match_total: int
    spurious_detections: int = 0


@dataclass
class LatencyStats:
    mean_per_word: float  # seconds
    median_per_word: float
    word_count: int


def _prf(tp: int, fp: int, fn: int) -> ThresholdScores:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ThresholdScores(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1)


def detection_prf(
    detections: list[list[BBox]],
    ground_truths: list[list[BBox]],
    thresholds: list[float],
) -> DetectionMetrics:
    """Micro-averaged P/R/F1 per IoU threshold over parallel page lists."""
    if len(detections) != len(ground_truths):
        raise ValueError("detections and ground_truths must have one entry per page")
    for t in thresholds:
        if not (0.0 < t <= 1.0):
            raise ValueError(f"threshold {t} outside (0, 1]")
    metrics = DetectionMetrics()
    for t in thresholds:
        tp = fp = fn = 0
        for dets, gts in zip(detections, ground_truths):
            matching = match_boxes(dets, gts, t)
            tp += len(matching.pairs)
            fp += len(matching.unmatched_detections)
            fn += len(matching.unmatched_ground_truths)
        metrics.per_threshold[t] = _prf(tp, fp, fn)
    return metrics


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over codepoints (standard two-row DP)."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


@dataclass
class _RecognitionCounters:
    gt_chars: int = 0
    edits: int = 0
    gt_words: int = 0
    exact: int = 0
    spurious: int = 0

    def score_pair(self, gt: str, pred: str) -> None:
        self.gt_chars += len(gt)
        self.edits += levenshtein(gt, pred)
        self.gt_words += 1
        self.exact += int(gt == pred)

    def miss(self, gt: str) -> None:
        self.gt_chars += len(gt)
        self.edits += len(gt)
        self.gt_words += 1

    def finish(self) -> RecognitionMetrics:
        crr = 100.0 * max(0.0, 1.0 - self.edits / self.gt_chars) if self.gt_chars else 0.0
        wrr = 100.0 * self.exact / self.gt_words if self.gt_words else 0.0
        return RecognitionMetrics(
            crr=crr,
            wrr=wrr,
            gt_char_total=self.gt_chars,
            edit_total=self.edits,
            gt_word_total=self.gt_words,
            exact_match_total=self.exact,
            spurious_detections=self.spurious,
        )


def isolated_eval(pairs: list[tuple[str, str]]) -> RecognitionMetrics:
    """Score (ground truth, prediction) text pairs; the detector plays no part."""
    counters = _RecognitionCounters()
    for gt, pred in pairs:
        gt = _nfc(gt)
        if not gt:
            raise ValueError("ground-truth text must be non-empty")
        counters.score_pair(gt, _nfc(pred))
    return counters.finish()


def _associate_by_overlap(detections: list[BBox], gts: list[BBox]) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Greedy one-to-one pairing by descending raw overlap area (> 0 required)."""
    candidates = []
    for di, det in enumerate(detections):
        for gi, gt in enumerate(gts):
            overlap = det.intersection_area(gt)
            if overlap > 0:
                candidates.append((overlap, di, gi))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    used_d: set[int] = set()
    used_g: set[int] = set()
    pairs = []
    for _, di, gi in candidates:
        if di in used_d or gi in used_g:
            continue
        used_d.add(di)
        used_g.add(gi)
        pairs.append((di, gi))
    spare_d = [i for i in range(len(detections)) if i not in used_d]
    spare_g = [i for i in range(len(gts)) if i not in used_g]
    return pairs, spare_d, spare_g


def e2e_eval(results: list[PageResult], labels: dict[str, PageLabel]) -> RecognitionMetrics:
    """End-to-end recognition scoring against maximum-overlap ground truth.

    Each detection is associated with the ground-truth word sharing the
    largest overlap area; paired words score like isolated evaluation,
    unpaired ground truth counts as deleted, and unpaired detections are
    reported as spurious without touching CRR/WRR.
    """
    counters = _RecognitionCounters()
    for result in results:
        if result.page_id not in labels:
            raise ValueError(f"no label for page {result.page_id!r}")
        label = labels[result.page_id]
        det_boxes = [w.detection.bbox for w in result.words]
        gt_boxes = label.boxes()
        pairs, spare_d, spare_g = _associate_by_overlap(det_boxes, gt_boxes)
        for di, gi in pairs:
            counters.score_pair(_nfc(label.words[gi].transcript), _nfc(result.words[di].text))
        for gi in spare_g:
            counters.miss(_nfc(label.words[gi].transcript))
        counters.spurious += len(spare_d)
    return counters.finish()


def latency_stats(results: list[PageResult]) -> LatencyStats:
    """Per-word end-to-end latency: recognize time plus the page's detection
    time amortized evenly over that page's words."""
    per_word: list[float] = []
    for result in results:
        n = len(result.words)
        if n == 0:
            continue
        share = result.detect_latency / n
        per_word.extend(w.latency + share for w in result.words)
    if not per_word:
        raise ZeroWords("no recognized words in any page result")
    return LatencyStats(
        mean_per_word=sum(per_word) / len(per_word),
        median_per_word=statistics.median(per_word),
        word_count=len(per_word),
    )
