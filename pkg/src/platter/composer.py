"""Synthetic page composition: lay preprocessed word crops onto fixed-size pages.

Each page draws a reference word height, scales every word by a random factor
around it, and packs words left-to-right / top-to-bottom with configurable
spacing, emitting the page image together with detection+recognition labels.
Dataset composition consumes a word pool exactly once in seeded-shuffled order
and is byte-for-byte reproducible for a fixed (pool, config, seed).
"""
from __future__ import annotations

import json
import unicodedata
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from platter import imaging, synthgen, wordprep
from platter.geometry import BBox

FIXED = "fixed"
CHAR_RELATIVE = "char_relative"


@dataclass(frozen=True)
class ComposerConfig:
    page_width: int = 1024
    page_height: int = 1024
    space_y: int = 32
    space_x_mode: str = FIXED  # "fixed" | "char_relative"
    space_x: int = 32
    char_space_range: tuple[float, float] = (1.0, 3.0)  # multiples of mean character width
    reference_height_range: tuple[int, int] = (32, 64)
    height_factor_range: tuple[float, float] = (0.8, 1.2)
    margin: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.reference_height_range
        if not (8 <= lo <= hi):
            raise ValueError(f"bad reference_height_range {self.reference_height_range}")
        if min(self.page_width, self.page_height) < 4 * hi:
            raise ValueError("page dimensions must be at least 4x the max reference height")
        flo, fhi = self.height_factor_range
        if not (0.0 < flo <= fhi < 2.0):
            raise ValueError(f"height factor range must lie within (0, 2), got {self.height_factor_range}")
        if self.space_x_mode not in (FIXED, CHAR_RELATIVE):
            raise ValueError(f"unknown space_x_mode {self.space_x_mode!r}")
        if self.margin < 0 or self.space_x < 0 or self.space_y < 0:
            raise ValueError("margin and spacing must be non-negative")


@dataclass(frozen=True)
class WordRecord:
    bbox: BBox
    transcript: str
    language: str = "synthetic"


@dataclass
class PageLabel:
    page_id: str
    width: int
    height: int
    words: list[WordRecord]
    reference_height: int

    def boxes(self) -> list[BBox]:
        return [w.bbox for w in self.words]

    def to_json_dict(self) -> dict:
        return {
            "page_id": self.page_id,
            "width": self.width,
            "height": self.height,
            "reference_height": self.reference_height,
            "words": [
                {"bbox": list(w.bbox.as_tuple()), "text": w.transcript, "language": w.language}
                for w in self.words
            ],
        }

    @staticmethod
    def from_json_dict(d: dict) -> "PageLabel":
        return PageLabel(
            page_id=d["page_id"],
            width=d["width"],
            height=d["height"],
            reference_height=d["reference_height"],
            words=[
                WordRecord(bbox=BBox(*rec["bbox"]), transcript=rec["text"], language=rec.get("language", ""))
                for rec in d["words"]
            ],
        )


@dataclass
class PageComposition:
    page: np.ndarray
    label: PageLabel
    consumed: int  # words eaten from the input sequence (placed + skipped)
    skipped: list[tuple[int, str]] = field(default_factory=list)  # (sequence index, transcript)


@dataclass
class DatasetManifest:
    splits: dict[str, list[dict]]  # split -> [{"image": ..., "label": ...}]
    language: str
    config: dict
    seed: int
    skipped_words: list[dict] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "language": self.language,
            "config": self.config,
            "splits": self.splits,
            "skipped_words": self.skipped_words,
        }


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def compose_page(
    words,
    cfg: ComposerConfig,
    rng: np.random.Generator,
    page_id: str = "page",
) -> PageComposition:
    """Pack words onto one page until it is full or the sequence runs out.

    `words` is a sequence of (ink crop, transcript, language) with crops
    already preprocessed (tight, binary). Words are scaled to the page's
    reference height times a per-word factor and placed left-to-right,
    breaking lines at the right margin. A word wider (or taller) than the
    usable area is skipped and reported; a word that merely does not fit on
    the remaining page stops composition so it can open the next page.
    """
    page = np.full((cfg.page_height, cfg.page_width), 255, dtype=np.uint8)
    limit_x = cfg.page_width - cfg.margin
    limit_y = cfg.page_height - cfg.margin
    usable_w = cfg.page_width - 2 * cfg.margin
    usable_h = cfg.page_height - 2 * cfg.margin

    ref_lo, ref_hi = cfg.reference_height_range
    reference = int(rng.integers(ref_lo, ref_hi + 1))
    f_lo, f_hi = cfg.height_factor_range

    placed: list[WordRecord] = []
    skipped: list[tuple[int, str]] = []
    x, y, line_h = cfg.margin, cfg.margin, 0
    consumed = 0

    for idx, (crop, transcript, language) in enumerate(words):
        factor = float(rng.uniform(f_lo, f_hi))
        h = int(np.floor(reference * factor + 0.5))
        scaled = wordprep.resize_to_height(crop, h)
        w = scaled.shape[1]

        if w > usable_w or h > usable_h:
            skipped.append((idx, transcript))
            consumed += 1
            continue

        gap = 0
        if x > cfg.margin:
            if cfg.space_x_mode == FIXED:
                gap = cfg.space_x
            else:
                c_lo, c_hi = cfg.char_space_range
                char_w = w / max(1, len(transcript))
                gap = max(1, int(np.floor(float(rng.uniform(c_lo, c_hi)) * char_w + 0.5)))

        if x + gap + w > limit_x:
            x = cfg.margin
            y += line_h + cfg.space_y
            line_h = 0
            gap = 0
        if y + h > limit_y:
            break  # page full; this word opens the next page

        page[y : y + h, x + gap : x + gap + w][scaled] = 0
        placed.append(WordRecord(bbox=BBox(x + gap, y, x + gap + w, y + h), transcript=_nfc(transcript), language=language))
        x = x + gap + w
        line_h = max(line_h, h)
        consumed += 1

    label = PageLabel(
        page_id=page_id,
        width=cfg.page_width,
        height=cfg.page_height,
        words=placed,
        reference_height=reference,
    )
    return PageComposition(page=page, label=label, consumed=consumed, skipped=skipped)


def page_rng(seed: int, page_index: int) -> np.random.Generator:
    """Per-page generator; serial and parallel composition draw identically."""
    return np.random.default_rng(np.random.SeedSequence((seed & 0xFFFFFFFFFFFFFFFF, 1, page_index)))


def _split_counts(n: int, fractions: dict[str, float]) -> dict[str, int]:
    total = sum(fractions.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"split fractions must sum to 1, got {total}")
    names = list(fractions)
    counts = {}
    cum = 0.0
    prev = 0
    for name in names:
        cum += fractions[name]
        bound = int(np.floor(n * cum + 0.5))
        counts[name] = bound - prev
        prev = bound
    counts[names[-1]] += n - prev
    return counts


def compose_dataset(
    pool_dir: Path | str,
    cfg: ComposerConfig,
    split_fractions: dict[str, float],
    seed: int | None = None,
    out_dir: Path | str = "dataset",
    prep: wordprep.PrepConfig | None = None,
) -> DatasetManifest:
    """Compose a full labeled dataset from a word pool.

    The pool is preprocessed, shuffled once with the dataset seed, divided
    into splits by the given fractions, and packed into pages until every
    word has been consumed. Unreadable or empty-content pool images go into
    the manifest's skip report. Output layout:

        out_dir/pages/<split>_<index>.png
        out_dir/labels/<split>_<index>.json
        out_dir/manifest.json
    """
    pool_dir = Path(pool_dir)
    out_dir = Path(out_dir)
    seed = cfg.seed if seed is None else seed
    entries = synthgen.load_pool(pool_dir)
    if not entries:
        raise ValueError(f"pool at {pool_dir} is empty")

    crops: list[tuple[np.ndarray, str, str]] = []
    skip_report: list[dict] = []
    for entry in entries:
        try:
            img = imaging.read_image(pool_dir / entry.path)
            crops.append((wordprep.preprocess_word(img, prep), entry.text, entry.language))
        except (OSError, ValueError, wordprep.EmptyContent) as exc:
            skip_report.append({"path": entry.path, "reason": f"{type(exc).__name__}: {exc}"})

    if not crops:
        raise ValueError("no usable word images in pool")

    shuffle_rng = np.random.default_rng(np.random.SeedSequence((seed & 0xFFFFFFFFFFFFFFFF, 0)))
    order = shuffle_rng.permutation(len(crops))
    shuffled = [crops[i] for i in order]

    counts = _split_counts(len(shuffled), split_fractions)
    (out_dir / "pages").mkdir(parents=True, exist_ok=True)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)

    languages = {lang for _, _, lang in crops}
    manifest = DatasetManifest(
        splits={name: [] for name in split_fractions},
        language=languages.pop() if len(languages) == 1 else "multi",
        config=asdict(cfg),
        seed=seed,
        skipped_words=skip_report,
    )

    page_index = 0
    offset = 0
    for split, count in counts.items():
        remaining = shuffled[offset : offset + count]
        offset += count
        split_page = 0
        while remaining:
            page_id = f"{split}_{split_page:05d}"
            comp = compose_page(remaining, cfg, page_rng(seed, page_index), page_id=page_id)
            if comp.consumed == 0:
                break
            for idx, transcript in comp.skipped:
                skip_report.append({"text": transcript, "reason": "WordTooLarge", "page": page_id})
            remaining = remaining[comp.consumed :]
            image_rel = f"pages/{page_id}.png"
            label_rel = f"labels/{page_id}.json"
            imaging.write_png(out_dir / image_rel, comp.page)
            write_label(out_dir / label_rel, comp.label)
            manifest.splits[split].append({"image": image_rel, "label": label_rel})
            page_index += 1
            split_page += 1

    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json_dict(), fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest


def write_label(path: Path | str, label: PageLabel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(label.to_json_dict(), fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")


def read_label(path: Path | str) -> PageLabel:
    with open(path, encoding="utf-8") as fh:
        return PageLabel.from_json_dict(json.load(fh))


def read_manifest(dataset_dir: Path | str) -> DatasetManifest:
    dataset_dir = Path(dataset_dir)
    with open(dataset_dir / "manifest.json", encoding="utf-8") as fh:
        d = json.load(fh)
    return DatasetManifest(
        splits=d["splits"],
        language=d.get("language", ""),
        config=d.get("config", {}),
        seed=d.get("seed", 0),
        skipped_words=d.get("skipped_words", []),
    )
