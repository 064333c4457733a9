"""Two-stage page OCR core: detector/recognizer contracts, built-in baselines,
ground-truth oracle stages, and end-to-end page inference with per-word timing.

A detector maps a page image to word boxes; a recognizer maps a cropped word
image to text. Both receive a PageContext so label-replaying oracle stages can
work through the same interface as real models. External subprocess models
plug in via platter.adapters with identical semantics.
"""
from __future__ import annotations

import time
import unicodedata
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from platter import imaging, wordprep
from platter.geometry import BBox
from platter.synthgen import Atlas

READING_BAND_PX = 20  # y-banding granularity for reading order
DEFAULT_CROP_PAD = 2

DETECT_CLOSE_KERNEL_W = 9
DETECT_CLOSE_KERNEL_H = 3
DETECT_MIN_AREA = 30

TEMPLATE_HEIGHT = 32


class OracleMiss(Exception):
    """An oracle stage was queried with a box overlapping no label word."""


@dataclass(frozen=True)
class Detection:
    bbox: BBox
    score: float = 1.0


@dataclass
class RecognizedWord:
    detection: Detection
    text: str
    latency: float  # seconds spent recognizing this word


@dataclass
class PageResult:
    page_id: str
    words: list[RecognizedWord]
    detect_latency: float
    total_latency: float


@dataclass
class PageContext:
    """Per-page information handed to both stages."""

    page_id: str = ""
    language: str = ""
    label: object | None = None  # composer.PageLabel when ground truth is available


class Detector(Protocol):
    def detect(self, page: np.ndarray, ctx: PageContext) -> list[Detection]: ...


class Recognizer(Protocol):
    def recognize(self, crop: np.ndarray, box: BBox, ctx: PageContext) -> str: ...


def reading_order_key(box: BBox) -> tuple[int, int, int]:
    return (box.y0 // READING_BAND_PX, box.x0, box.y0)


def detect_builtin(
    page: np.ndarray,
    close_kernel_w: int = DETECT_CLOSE_KERNEL_W,
    close_kernel_h: int = DETECT_CLOSE_KERNEL_H,
    min_area: int = DETECT_MIN_AREA,
) -> list[Detection]:
    """Classical word detector: binarize, close, take connected components.

    Morphological closing bridges intra-word stroke gaps without joining
    separate words (word spacing is much wider than the kernel). Components
    below min_area are dropped; boxes come back in reading order.
    """
    mask = imaging.otsu_binarize(page)
    closed = imaging.erode(
        imaging.dilate(mask, close_kernel_w, close_kernel_h, 1), close_kernel_w, close_kernel_h, 1
    )
    comps = imaging.connected_components(closed)
    boxes = [box for _, box, area in comps if area >= min_area]
    boxes.sort(key=reading_order_key)
    return [Detection(bbox=b, score=1.0) for b in boxes]


def recognize_template(crop: np.ndarray, atlas: Atlas) -> tuple[str, float]:
    """Nearest-template recognition by ink-mask IoU at a 32px working height.

    The crop and every atlas reference are scaled to height 32; each
    reference is then stretched to the crop's width and scored as
    |ink intersection| / |ink union|. Highest similarity wins, ties broken by
    lexicographically smaller text.
    """
    recognizer = TemplateRecognizer(atlas)
    return recognizer.best_match(crop)


class TemplateRecognizer:
    """Recognizer stage wrapping nearest-template matching with small caches."""

    def __init__(self, atlas: Atlas):
        if not atlas.entries:
            raise ValueError("atlas must be non-empty")
        self._refs: list[tuple[str, np.ndarray]] = []
        for text in sorted(atlas.entries):
            for crop in atlas.entries[text]:
                self._refs.append((text, wordprep.resize_to_height(crop, TEMPLATE_HEIGHT)))
        self._stack_cache: dict[int, np.ndarray] = {}
        self._cache_cap = 32

    def _ref_stack(self, width: int) -> np.ndarray:
        stack = self._stack_cache.get(width)
        if stack is None:
            resized = [imaging.nn_resize(mask, TEMPLATE_HEIGHT, width) for _, mask in self._refs]
            stack = np.stack(resized)
            if len(self._stack_cache) >= self._cache_cap:
                self._stack_cache.pop(next(iter(self._stack_cache)))
            self._stack_cache[width] = stack
        return stack

    def best_match(self, crop: np.ndarray) -> tuple[str, float]:
        if crop.dtype != bool:
            crop = crop < 128  # grayscale page crops are black ink on white paper
        crop32 = wordprep.resize_to_height(crop, TEMPLATE_HEIGHT)
        stack = self._ref_stack(crop32.shape[1])
        inter = np.logical_and(stack, crop32).sum(axis=(1, 2), dtype=np.int64)
        union = np.logical_or(stack, crop32).sum(axis=(1, 2), dtype=np.int64)
        sims = np.where(union > 0, inter / np.maximum(union, 1), 0.0)
        best = int(np.argmax(sims))  # refs sorted by text, argmax takes the first max
        return self._refs[best][0], float(sims[best])

    def recognize(self, crop: np.ndarray, box: BBox, ctx: PageContext) -> str:
        text, _ = self.best_match(crop)
        return text


class BuiltinDetector:
    def __init__(
        self,
        close_kernel_w: int = DETECT_CLOSE_KERNEL_W,
        close_kernel_h: int = DETECT_CLOSE_KERNEL_H,
        min_area: int = DETECT_MIN_AREA,
    ):
        self.close_kernel_w = close_kernel_w
        self.close_kernel_h = close_kernel_h
        self.min_area = min_area

    def detect(self, page: np.ndarray, ctx: PageContext) -> list[Detection]:
        return detect_builtin(page, self.close_kernel_w, self.close_kernel_h, self.min_area)


def oracle_detector(label) -> list[Detection]:
    """Replay the label's word boxes as detections (score 1.0, reading order)."""
    boxes = sorted(label.boxes(), key=reading_order_key)
    return [Detection(bbox=b, score=1.0) for b in boxes]


def oracle_recognizer(query: BBox, label) -> str:
    """Transcript of the label word whose box overlaps the query box the most."""
    best_area = 0
    best_text = None
    for word in label.words:
        overlap = query.intersection_area(word.bbox)
        if overlap > best_area:
            best_area = overlap
            best_text = word.transcript
    if best_text is None:
        raise OracleMiss(f"query box {query.as_tuple()} overlaps no label word")
    return best_text


class OracleDetector:
    def detect(self, page: np.ndarray, ctx: PageContext) -> list[Detection]:
        if ctx.label is None:
            raise OracleMiss("oracle detector needs a page label in the context")
        return oracle_detector(ctx.label)


class OracleRecognizer:
    def recognize(self, crop: np.ndarray, box: BBox, ctx: PageContext) -> str:
        if ctx.label is None:
            raise OracleMiss("oracle recognizer needs a page label in the context")
        return oracle_recognizer(box, ctx.label)


@dataclass
class StageError(Exception):
    """Stage failure annotated with page and word context."""

    page_id: str
    stage: str
    detail: str
    box: tuple | None = None

    def __str__(self) -> str:
        where = f" box={self.box}" if self.box else ""
        return f"{self.stage} stage failed on page {self.page_id}{where}: {self.detail}"


def crop_box(page: np.ndarray, box: BBox, pad: int) -> np.ndarray:
    h, w = page.shape
    padded = box.expand(pad, w, h)
    return page[padded.y0 : padded.y1, padded.x0 : padded.x1]


def infer_page(
    page: np.ndarray,
    detector: Detector,
    recognizer: Recognizer,
    ctx: PageContext | None = None,
    pad: int = DEFAULT_CROP_PAD,
) -> PageResult:
    """Detect words, crop each box (expanded by `pad`, clipped to the page),
    recognize every crop in reading order, and record wall-clock latencies."""
    ctx = ctx or PageContext()
    t_start = time.perf_counter()
    try:
        detections = detector.detect(page, ctx)
    except Exception as exc:
        raise StageError(ctx.page_id, "detector", str(exc)) from exc
    detect_latency = time.perf_counter() - t_start

    detections = sorted(detections, key=lambda d: reading_order_key(d.bbox))
    words: list[RecognizedWord] = []
    for det in detections:
        crop = crop_box(page, det.bbox, pad)
        t_word = time.perf_counter()
        try:
            text = recognizer.recognize(crop, det.bbox, ctx)
        except Exception as exc:
            raise StageError(ctx.page_id, "recognizer", str(exc), box=det.bbox.as_tuple()) from exc
        words.append(
            RecognizedWord(detection=det, text=unicodedata.normalize("NFC", text), latency=time.perf_counter() - t_word)
        )
    return PageResult(
        page_id=ctx.page_id,
        words=words,
        detect_latency=detect_latency,
        total_latency=time.perf_counter() - t_start,
    )
