"""Ground-truth replay adapter: serves dataset labels over the wire protocol.

Run as a subprocess by the framework (or by hand for debugging):

    python -m platter.oracle_adapter --dataset DIR --split test --kind detector
    python -m platter.oracle_adapter --dataset DIR --split test --kind recognizer [--pad 2]

The detector variant matches each request image against the dataset pages by
pixel digest and replays that page's label boxes. The recognizer variant
precomputes the pad-expanded crop of every labeled word and answers with the
transcript whose crop pixels match the request. This gives an external-process
path that is observationally identical to the in-process oracle stages.
"""
from __future__ import annotations

import argparse
import base64
import hashlib
import json
import sys
from pathlib import Path

from platter import composer, imaging
from platter.pipeline import DEFAULT_CROP_PAD, crop_box, reading_order_key


def _digest(img) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(str(img.shape).encode())
    h.update(img.tobytes())
    return h.hexdigest()


def _load(dataset: Path, split: str):
    manifest = composer.read_manifest(dataset)
    if split not in manifest.splits:
        raise SystemExit(f"split {split!r} not in dataset manifest ({sorted(manifest.splits)})")
    pages = []
    for entry in manifest.splits[split]:
        img = imaging.read_image(dataset / entry["image"])
        label = composer.read_label(dataset / entry["label"])
        pages.append((img, label))
    return pages


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="platter-oracle-adapter", description=__doc__)
    parser.add_argument("--dataset", required=True, type=Path)
    parser.add_argument("--split", required=True)
    parser.add_argument("--kind", required=True, choices=["detector", "recognizer"])
    parser.add_argument("--pad", type=int, default=DEFAULT_CROP_PAD)
    args = parser.parse_args(argv)

    pages = _load(args.dataset, args.split)
    page_index: dict[str, composer.PageLabel] = {}
    crop_index: dict[str, str] = {}
    if args.kind == "detector":
        for img, label in pages:
            page_index[_digest(img)] = label
    else:
        # Index both the pad-expanded crops (end-to-end flow) and the exact
        # label-box crops (isolated evaluation).
        for img, label in pages:
            for word in label.words:
                for pad in {args.pad, 0}:
                    crop_index[_digest(crop_box(img, word.bbox, pad))] = word.transcript

    out = sys.stdout
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        if "hello" in msg:
            out.write(json.dumps({"ready": {"name": "oracle-replay"}}) + "\n")
            out.flush()
            continue
        if msg.get("bye"):
            return 0
        img = imaging.decode_png_bytes(base64.b64decode(msg["image_png_b64"]))
        if args.kind == "detector":
            label = page_index.get(_digest(img))
            words = []
            if label is not None:
                boxes = sorted(label.boxes(), key=reading_order_key)
                words = [{"bbox": list(b.as_tuple()), "score": 1.0} for b in boxes]
            out.write(json.dumps({"id": msg["id"], "words": words}) + "\n")
        else:
            text = crop_index.get(_digest(img), "")
            out.write(json.dumps({"id": msg["id"], "text": text}, ensure_ascii=False) + "\n")
        out.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
