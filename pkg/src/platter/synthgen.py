"""Deterministic procedural generator of handwriting-like word images.

Each codepoint hashes to a fixed polyline pattern on an 8x8 control grid;
rendering scales the pattern into a 48px glyph box, applies per-point jitter
drawn from the style seed, and stamps strokes of configurable width. Optional
page artifacts (a ruled line, border speckle) exercise the preprocessing
pipeline. Everything is a pure function of its inputs, so regeneration with
the same seed is byte-identical.
"""
from __future__ import annotations

import hashlib
import json
import logging
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from platter import imaging, wordprep

log = logging.getLogger(__name__)

GRID = 8  # control grid is GRID x GRID
POINTS_PER_GLYPH = 6
GLYPH_H = 48
GLYPH_W = 40
GLYPH_GAP = 2  # glyph ink just touches, so a word stays one connected component
# Side margin stays wider than the preprocessing border cut (3.5% of width)
# for words up to ~8 glyphs, so the cut never bites into glyph ink.
MARGIN_X = 18
MARGIN_TOP = 30  # roomy top band keeps border speckle clear of the glyphs
MARGIN_BOTTOM = 6
RULED_LINE_FRACTION = 0.85
RULED_LINE_THICKNESS = 2
_PATTERN_SALT = b"glyph-pattern-v1"


@dataclass(frozen=True)
class GlyphStyle:
    stroke_width: int = 3
    jitter_amplitude: int = 1
    slant: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.stroke_width < 1:
            raise ValueError("stroke_width must be >= 1")
        if not (0 <= self.jitter_amplitude <= 3):
            raise ValueError("jitter_amplitude must be in [0, 3]")


@dataclass
class Atlas:
    """Reference crops per word text, used by the template recognizer."""

    entries: dict[str, list[np.ndarray]] = field(default_factory=dict)

    def add(self, text: str, crop: np.ndarray) -> None:
        self.entries.setdefault(unicodedata.normalize("NFC", text), []).append(crop)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class PoolEntry:
    path: str
    text: str
    language: str
    style_seed: int


def codepoint_pattern(codepoint: int) -> list[tuple[int, int]]:
    """Deterministic polyline control points for one codepoint, spanning the grid.

    Points come from a keyed hash of the codepoint; both axes are then
    stretched to cover 0..GRID-1 so every glyph fills its box, which keeps
    word geometry (and the ruled-line position relative to the ink) stable.
    """
    digest = hashlib.blake2b(_PATTERN_SALT + codepoint.to_bytes(4, "little"), digest_size=2 * POINTS_PER_GLYPH).digest()
    xs = [digest[2 * i] % GRID for i in range(POINTS_PER_GLYPH)]
    ys = [digest[2 * i + 1] % GRID for i in range(POINTS_PER_GLYPH)]

    def stretch(vals: list[int]) -> list[int]:
        lo, hi = min(vals), max(vals)
        if lo == hi:
            n = len(vals)
            return [round(i * (GRID - 1) / (n - 1)) for i in range(n)]
        return [round((v - lo) * (GRID - 1) / (hi - lo)) for v in vals]

    return list(zip(stretch(xs), stretch(ys)))


def _stamp_segment(mask: np.ndarray, p0: tuple[int, int], p1: tuple[int, int], stroke: int) -> None:
    x0, y0 = p0
    x1, y1 = p1
    steps = max(abs(x1 - x0), abs(y1 - y0)) + 1
    ts = np.linspace(0.0, 1.0, steps)
    cx = np.floor(x0 + ts * (x1 - x0) + 0.5).astype(int)
    cy = np.floor(y0 + ts * (y1 - y0) + 0.5).astype(int)
    r0 = (stroke - 1) // 2
    r1 = stroke // 2
    h, w = mask.shape
    for x, y in zip(cx, cy):
        mask[max(0, y - r0) : min(h, y + r1 + 1), max(0, x - r0) : min(w, x + r1 + 1)] = True


def _render_glyph(codepoint: int, style: GlyphStyle) -> np.ndarray:
    """Rasterize one glyph as a GLYPH_H x GLYPH_W ink mask.

    Besides the hashed polyline, full-height vertical strokes are stamped at
    the leftmost and rightmost control points (picket-style entry/exit
    strokes). They keep each glyph one connected piece, give words a sharp
    ink-profile ramp at their edges, and make adjacent glyphs connect at any
    resize scale.
    """
    pattern = codepoint_pattern(codepoint)
    rng = np.random.default_rng(np.random.SeedSequence((style.seed, codepoint, 0x51)))
    j = style.jitter_amplitude
    mask = np.zeros((GLYPH_H, GLYPH_W), dtype=bool)
    pts = []
    for gx, gy in pattern:
        px = gx * (GLYPH_W - 1) / (GRID - 1)
        py = gy * (GLYPH_H - 1) / (GRID - 1)
        if j > 0:
            px += int(rng.integers(-j, j + 1))
            py += int(rng.integers(-j, j + 1))
        px += style.slant * (GLYPH_H - 1 - py)
        pts.append((int(np.floor(px + 0.5)), int(np.floor(py + 0.5))))
    for p0, p1 in zip(pts, pts[1:]):
        _stamp_segment(mask, p0, p1, style.stroke_width)
    for px, _ in (min(pts), max(pts)):
        _stamp_segment(mask, (px, 0), (px, GLYPH_H - 1), style.stroke_width)
    return mask


_glyph_cache: dict[tuple, np.ndarray] = {}


def _glyph(codepoint: int, style: GlyphStyle) -> np.ndarray:
    key = (codepoint, style.seed, style.stroke_width, style.jitter_amplitude, style.slant)
    got = _glyph_cache.get(key)
    if got is None:
        got = _render_glyph(codepoint, style)
        _glyph_cache[key] = got
    return got


def render_word(
    text: str,
    style: GlyphStyle | None = None,
    *,
    ruled_line: bool = False,
    border_noise: bool = False,
) -> np.ndarray:
    """Render a word as a grayscale image (ink 0, paper 255).

    With `ruled_line`, a full-width 2px line is drawn at 85% of the image
    height (crossing the lower part of the glyphs, like a baseline rule).
    With `border_noise`, a few isolated speckle dots are scattered along the
    top border band.
    """
    if not text:
        raise ValueError("text must be non-empty")
    style = style or GlyphStyle()
    text = unicodedata.normalize("NFC", text)
    cps = [ord(c) for c in text]

    width = 2 * MARGIN_X + len(cps) * GLYPH_W + (len(cps) - 1) * GLYPH_GAP
    height = MARGIN_TOP + GLYPH_H + MARGIN_BOTTOM
    mask = np.zeros((height, width), dtype=bool)
    for i, cp in enumerate(cps):
        x = MARGIN_X + i * (GLYPH_W + GLYPH_GAP)
        region = mask[MARGIN_TOP : MARGIN_TOP + GLYPH_H, x : x + GLYPH_W]
        np.logical_or(region, _glyph(cp, style), out=region)

    if ruled_line:
        y = int(height * RULED_LINE_FRACTION)
        mask[y : y + RULED_LINE_THICKNESS, :] = True
    if border_noise:
        # Speckle lives in the top corner bands, clear of the glyph columns.
        rng = np.random.default_rng(np.random.SeedSequence((style.seed, _text_key(text), 0x40)))
        for _ in range(3):
            side = int(rng.integers(0, 2))
            x = int(rng.integers(0, 4)) if side == 0 else width - 2 - int(rng.integers(0, 4))
            y = int(rng.integers(0, 4))
            mask[y : y + 2, x : x + 2] = True

    return imaging.mask_to_gray(mask)


def _text_key(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "little")


def random_lexicon(size: int, seed: int, min_len: int = 3, max_len: int = 8) -> list[str]:
    """Seeded lexicon of distinct lowercase pseudo-words for desk-scale runs."""
    rng = np.random.default_rng(seed)
    alphabet = "abcdefghijklmnopqrstuvwxyz"
    words: list[str] = []
    seen: set[str] = set()
    while len(words) < size:
        n = int(rng.integers(min_len, max_len + 1))
        w = "".join(alphabet[int(rng.integers(0, 26))] for _ in range(n))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def build_pool(
    lexicon: list[str],
    styles_per_word: int,
    seed: int,
    out_dir: Path | str,
    *,
    language: str = "synthetic",
    ruled_line: bool = False,
    border_noise: bool = False,
) -> tuple[list[PoolEntry], Atlas]:
    """Render a labeled word-image pool and the matching recognition atlas.

    Writes one PNG per (word, style) plus a JSON-lines manifest `pool.jsonl`
    with records {path, text, language, style_seed}. The atlas holds the
    preprocessed tight crop of every rendered image, keyed by word text.
    Duplicate lexicon entries are collapsed with a warning.
    """
    if not lexicon:
        raise ValueError("lexicon must be non-empty")
    if styles_per_word < 1:
        raise ValueError("styles_per_word must be >= 1")

    words: list[str] = []
    seen: set[str] = set()
    for w in lexicon:
        w = unicodedata.normalize("NFC", w)
        if w in seen:
            log.warning("duplicate lexicon entry %r collapsed", w)
            continue
        seen.add(w)
        words.append(w)

    out_dir = Path(out_dir)
    img_dir = out_dir / "words"
    img_dir.mkdir(parents=True, exist_ok=True)

    entries: list[PoolEntry] = []
    atlas = Atlas()
    with open(out_dir / "pool.jsonl", "w", encoding="utf-8") as fh:
        for wi, word in enumerate(words):
            for si in range(styles_per_word):
                style = GlyphStyle(seed=seed + si)
                img = render_word(word, style, ruled_line=ruled_line, border_noise=border_noise)
                rel = f"words/{wi:05d}_{si:02d}.png"
                imaging.write_png(out_dir / rel, img)
                entry = PoolEntry(path=rel, text=word, language=language, style_seed=style.seed)
                entries.append(entry)
                fh.write(
                    json.dumps(
                        {"path": rel, "text": word, "language": language, "style_seed": style.seed},
                        ensure_ascii=False,
                        sort_keys=True,
                    )
                    + "\n"
                )
                atlas.add(word, wordprep.preprocess_word(img))
    return entries, atlas


def load_pool(pool_dir: Path | str) -> list[PoolEntry]:
    """Read a pool manifest written by build_pool."""
    pool_dir = Path(pool_dir)
    manifest = pool_dir / "pool.jsonl"
    entries = []
    with open(manifest, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            entries.append(
                PoolEntry(path=rec["path"], text=rec["text"], language=rec["language"], style_seed=rec["style_seed"])
            )
    return entries


def atlas_from_pool(pool_dir: Path | str) -> Atlas:
    """Rebuild the recognition atlas by preprocessing every pool image."""
    pool_dir = Path(pool_dir)
    atlas = Atlas()
    for entry in load_pool(pool_dir):
        img = imaging.read_image(pool_dir / entry.path)
        try:
            atlas.add(entry.text, wordprep.preprocess_word(img))
        except wordprep.EmptyContent:
            log.warning("pool image %s preprocessed to empty content; skipped", entry.path)
    return atlas
