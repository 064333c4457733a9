"""Page-level handwritten-text OCR harness.

Splits page OCR into word detection followed by word recognition, and ships
everything needed to exercise that split without trained models: a procedural
word-image generator, a page composer that emits detection+recognition labels,
built-in classical detector/recognizer baselines, ground-truth oracle stages,
a line-delimited subprocess protocol for external models, and an evaluation
suite (detection P/R/F1, isolated and end-to-end CRR/WRR, per-word latency).
"""

__version__ = "0.1.0"

from platter.geometry import BBox, Matching, iou, match_boxes

__all__ = ["BBox", "Matching", "iou", "match_boxes", "__version__"]
