"""Minimal raster primitives for preprocessing, page composition, and detection.

Images are plain numpy arrays: grayscale pages are HxW uint8 (0 = black ink,
255 = white paper), RGB inputs are HxWx3 uint8, and ink masks are HxW bool
(True = ink). All operations are pure functions and preserve image shape
unless they state otherwise.
"""
from __future__ import annotations

import numpy as np
from PIL import Image
from scipy import ndimage

from platter.geometry import BBox

BLUR_KERNEL_SIZE = 5
BLUR_SIGMA = 1.0

# 8-connectivity structuring element for component labeling.
_CONN8 = np.ones((3, 3), dtype=bool)


def _require_2d(img: np.ndarray) -> None:
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected non-empty 2-d image, got shape {img.shape}")


def _round_half_up(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """Convert an 8-bit RGB raster to grayscale via round(0.299R + 0.587G + 0.114B)."""
    if rgb.ndim == 2:
        return rgb.astype(np.uint8, copy=True)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected HxWx3 RGB image, got shape {rgb.shape}")
    if rgb.shape[0] < 1 or rgb.shape[1] < 1:
        raise ValueError("zero-sized image")
    luma = (
        0.299 * rgb[:, :, 0].astype(np.float64)
        + 0.587 * rgb[:, :, 1].astype(np.float64)
        + 0.114 * rgb[:, :, 2].astype(np.float64)
    )
    return np.clip(_round_half_up(luma), 0, 255).astype(np.uint8)


def _gaussian_kernel_2d(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    k1 = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    kernel = np.outer(k1, k1)
    return kernel / kernel.sum()


def gaussian_blur(img: np.ndarray) -> np.ndarray:
    """5x5 Gaussian blur (sigma 1.0), edges handled by clamping coordinates."""
    _require_2d(img)
    kernel = _gaussian_kernel_2d(BLUR_KERNEL_SIZE, BLUR_SIGMA)
    blurred = ndimage.correlate(img.astype(np.float64), kernel, mode="nearest")
    return np.clip(_round_half_up(blurred), 0, 255).astype(np.uint8)


def otsu_binarize(img: np.ndarray) -> np.ndarray:
    """Binarize with the global threshold maximizing between-class variance.

    Pixels with intensity < threshold are ink. The smallest maximizing
    threshold is chosen, so a uniform image yields an all-paper mask.
    """
    _require_2d(img)
    hist = np.bincount(img.reshape(-1), minlength=256).astype(np.float64)
    total = hist.sum()

    # Cumulative weight and cumulative intensity mass for class {v < t}.
    weight0 = np.cumsum(hist)  # weight0[t-1] = count of pixels < t
    mass0 = np.cumsum(hist * np.arange(256))
    best_t = 0
    best_var = -1.0
    for t in range(256):
        w0 = weight0[t - 1] if t > 0 else 0.0
        w1 = total - w0
        if w0 == 0 or w1 == 0:
            var = 0.0
        else:
            m0 = (mass0[t - 1] if t > 0 else 0.0) / w0
            m1 = (mass0[255] - (mass0[t - 1] if t > 0 else 0.0)) / w1
            var = w0 * w1 * (m0 - m1) ** 2
        if var > best_var:
            best_var = var
            best_t = t
    return img < best_t


def _check_kernel(kernel_w: int, kernel_h: int) -> np.ndarray:
    if kernel_w < 1 or kernel_h < 1 or kernel_w % 2 == 0 or kernel_h % 2 == 0:
        raise ValueError(f"kernel dimensions must be odd and >= 1, got {kernel_w}x{kernel_h}")
    return np.ones((kernel_h, kernel_w), dtype=bool)


def dilate(mask: np.ndarray, kernel_w: int, kernel_h: int, iterations: int = 1) -> np.ndarray:
    """Morphological dilation with a rectangular structuring element."""
    _require_2d(mask)
    structure = _check_kernel(kernel_w, kernel_h)
    if iterations < 1:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=structure, iterations=iterations)


def erode(mask: np.ndarray, kernel_w: int, kernel_h: int, iterations: int = 1) -> np.ndarray:
    """Morphological erosion; outside the image counts as ink so closing is extensive."""
    _require_2d(mask)
    structure = _check_kernel(kernel_w, kernel_h)
    if iterations < 1:
        return mask.copy()
    return ndimage.binary_erosion(mask, structure=structure, iterations=iterations, border_value=1)


def connected_components(mask: np.ndarray) -> list[tuple[int, BBox, int]]:
    """8-connected components as (id, tight box, pixel area).

    Components are sorted by descending area, ties by (y0, x0); ids are
    assigned 1..n in that order.
    """
    _require_2d(mask)
    labels, count = ndimage.label(mask, structure=_CONN8)
    if count == 0:
        return []
    areas = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, count + 1))
    slices = ndimage.find_objects(labels)
    raw = []
    for i, sl in enumerate(slices):
        ys, xs = sl
        box = BBox(int(xs.start), int(ys.start), int(xs.stop), int(ys.stop))
        raw.append((box, int(areas[i])))
    raw.sort(key=lambda r: (-r[1], r[0].y0, r[0].x0))
    return [(cid, box, area) for cid, (box, area) in enumerate(raw, start=1)]


def label_components(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """Raw 8-connected labeling (label array, count), for callers that need pixel membership."""
    _require_2d(mask)
    labels, count = ndimage.label(mask, structure=_CONN8)
    return labels, count


def ink_profile(mask: np.ndarray, axis: str) -> np.ndarray:
    """Per-column ('columns') or per-row ('rows') ink pixel counts."""
    _require_2d(mask)
    if axis == "columns":
        return mask.sum(axis=0, dtype=np.int64)
    if axis == "rows":
        return mask.sum(axis=1, dtype=np.int64)
    raise ValueError(f"axis must be 'columns' or 'rows', got {axis!r}")


def nn_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize of a 2-d array to out_h x out_w."""
    _require_2d(img)
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output size must be positive, got {out_h}x{out_w}")
    in_h, in_w = img.shape
    rows = (np.arange(out_h) * in_h) // out_h
    cols = (np.arange(out_w) * in_w) // out_w
    return img[np.ix_(rows, cols)]


def mask_to_gray(mask: np.ndarray) -> np.ndarray:
    """Ink mask to grayscale: ink -> 0, paper -> 255."""
    _require_2d(mask)
    return np.where(mask, 0, 255).astype(np.uint8)


def read_image(path) -> np.ndarray:
    """Read a PNG (or other raster) as uint8 grayscale HxW or RGB HxWx3."""
    with Image.open(path) as im:
        if im.mode in ("L", "1", "I;16", "I"):
            return np.asarray(im.convert("L"), dtype=np.uint8)
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_png(path, img: np.ndarray) -> None:
    """Write a grayscale uint8 image or bool ink mask as an 8-bit PNG."""
    if img.dtype == bool:
        img = mask_to_gray(img)
    if img.ndim == 2:
        Image.fromarray(img, mode="L").save(path, format="PNG")
    elif img.ndim == 3 and img.shape[2] == 3:
        Image.fromarray(img, mode="RGB").save(path, format="PNG")
    else:
        raise ValueError(f"unsupported image shape {img.shape}")


def encode_png_bytes(img: np.ndarray) -> bytes:
    """PNG-encode an image in memory (adapter wire format, digests)."""
    import io

    buf = io.BytesIO()
    write_png(buf, img)
    return buf.getvalue()


def decode_png_bytes(data: bytes) -> np.ndarray:
    import io

    return read_image(io.BytesIO(data))
