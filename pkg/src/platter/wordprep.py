"""Word-image preprocessing: raw scan -> tight binarized crop ready for page placement.

Pipeline: grayscale -> Gaussian blur -> Otsu binarization -> border cut ->
ruled-line trim -> dilation-grouped speckle removal -> tight crop. The border
cut removes a fixed percentage of columns/rows per side to kill scanner edge
noise; the ruled-line trim drops edge columns/rows whose ink count falls below
a threshold, which deletes the residue of horizontal/vertical ruling lines
protruding past the word.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from platter import imaging
from platter.geometry import BBox

MIN_INPUT_SIZE = 8


class EmptyContent(Exception):
    """No ink component survived preprocessing (blank or pure-noise input)."""


@dataclass(frozen=True)
class PrepConfig:
    border_cut_x: float = 3.5  # percent of width removed from each side
    border_cut_y: float = 3.5  # percent of height removed from each side
    ruled_line_threshold: int = 10  # ink pixels per column/row below which edges are trimmed
    dilate_kernel: int = 3
    dilate_iterations: int = 2
    min_component_area: int = 9  # px^2 of actual ink, measured before dilation

    def __post_init__(self) -> None:
        if not (0 <= self.border_cut_x < 25 and 0 <= self.border_cut_y < 25):
            raise ValueError("border cuts must be in [0, 25) percent")
        if self.ruled_line_threshold < 1:
            raise ValueError("ruled_line_threshold must be >= 1")


def _trim_low_ink(mask: np.ndarray, threshold: int) -> tuple[np.ndarray, int, int]:
    """Drop consecutive low-ink columns from both ends, then rows likewise.

    Scanning inward from each extreme end stops at the first column (row)
    whose ink count reaches the threshold, so interior thin strokes are never
    touched. Returns (trimmed mask, left offset, top offset); the mask is
    empty when no column/row qualifies.
    """
    cols = imaging.ink_profile(mask, "columns")
    left = 0
    while left < len(cols) and cols[left] < threshold:
        left += 1
    right = len(cols)
    while right > left and cols[right - 1] < threshold:
        right -= 1
    mask = mask[:, left:right]
    if mask.size == 0:
        return mask, left, 0

    rows = imaging.ink_profile(mask, "rows")
    top = 0
    while top < len(rows) and rows[top] < threshold:
        top += 1
    bottom = len(rows)
    while bottom > top and rows[bottom - 1] < threshold:
        bottom -= 1
    return mask[top:bottom, :], left, top


def _drop_small_components(mask: np.ndarray, cfg: PrepConfig) -> np.ndarray:
    """Remove ink whose dilation-grouped component carries too little actual ink.

    Dilation merges nearby strokes into one group; the area test counts
    pre-dilation ink inside each group, so an isolated speckle is removed even
    though dilation inflates its footprint.
    """
    k = cfg.dilate_kernel
    grouped = imaging.dilate(mask, k, k, cfg.dilate_iterations)
    labels, count = imaging.label_components(grouped)
    if count == 0:
        return np.zeros_like(mask)
    ink_per_group = ndimage.sum_labels(mask.astype(np.int64), labels, index=np.arange(1, count + 1))
    keep = np.zeros(count + 1, dtype=bool)
    keep[1:] = ink_per_group >= cfg.min_component_area
    return mask & keep[labels]


def tight_box(mask: np.ndarray) -> BBox:
    """Tight bounding box of the ink in a mask; raises EmptyContent when blank."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0 or cols.size == 0:
        raise EmptyContent("mask has no ink")
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def preprocess_word_with_box(
    raw: np.ndarray, cfg: PrepConfig | None = None, *, blur: bool = True
) -> tuple[np.ndarray, BBox]:
    """Like preprocess_word, but also returns the crop's box in source coordinates."""
    cfg = cfg or PrepConfig()
    h, w = raw.shape[:2]
    if h < MIN_INPUT_SIZE or w < MIN_INPUT_SIZE:
        raise ValueError(f"input must be at least {MIN_INPUT_SIZE}px per side, got {w}x{h}")

    gray = imaging.to_gray(raw)
    if blur:
        gray = imaging.gaussian_blur(gray)
    mask = imaging.otsu_binarize(gray)

    cut_x = int(w * cfg.border_cut_x / 100.0)
    cut_y = int(h * cfg.border_cut_y / 100.0)
    mask = mask[cut_y : h - cut_y, cut_x : w - cut_x]

    mask, trim_x, trim_y = _trim_low_ink(mask, cfg.ruled_line_threshold)
    if mask.size == 0 or not mask.any():
        raise EmptyContent("all content trimmed")

    mask = _drop_small_components(mask, cfg)
    box = tight_box(mask)  # raises EmptyContent when every component was dropped
    crop = mask[box.y0 : box.y1, box.x0 : box.x1]
    ox = cut_x + trim_x + box.x0
    oy = cut_y + trim_y + box.y0
    return crop, BBox(ox, oy, ox + crop.shape[1], oy + crop.shape[0])


def preprocess_word(raw: np.ndarray, cfg: PrepConfig | None = None, *, blur: bool = True) -> np.ndarray:
    """Full preprocessing pipeline; returns a tight bool ink crop.

    `blur=False` skips the Gaussian blur stage, which makes a second pass over
    already-clean output a pure re-crop. Raises EmptyContent when nothing
    survives.
    """
    crop, _ = preprocess_word_with_box(raw, cfg, blur=blur)
    return crop


def resize_to_height(crop: np.ndarray, target_height: int) -> np.ndarray:
    """Aspect-preserving nearest-neighbor scale to exactly target_height rows."""
    if target_height < 8:
        raise ValueError(f"target_height must be >= 8, got {target_height}")
    h, w = crop.shape
    if h == target_height:
        return crop.copy()
    out_w = max(1, int(np.floor(w * target_height / h + 0.5)))
    return imaging.nn_resize(crop, target_height, out_w)
