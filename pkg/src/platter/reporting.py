"""Report outputs: hOCR/JSON/plain-text transcripts, reconstruction images,
CSV metric tables, and SVG comparison charts.

Numeric formatting is pinned so every artifact agrees: CSV cells carry two
decimals, chart value labels carry one, and the JSON report keeps full
precision. Charts are rendered with matplotlib's SVG backend with fonts kept
as text, so the value labels are literal strings inside the SVG.
"""
from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from platter import imaging, synthgen
from platter.geometry import BBox
from platter.metrics import DetectionMetrics, LatencyStats, RecognitionMetrics
from platter.pipeline import PageResult

HOCR_DOCTYPE = (
    '<!DOCTYPE html PUBLIC "-//W3C//DTD XHTML 1.0 Transitional//EN" '
    '"http://www.w3.org/TR/xhtml1/DTD/xhtml1-transitional.dtd">'
)
XHTML_NS = "http://www.w3.org/1999/xhtml"


def fmt_csv(value: float) -> str:
    return f"{value:.2f}"


def fmt_label(value: float) -> str:
    return f"{value:.1f}"


# ---------------------------------------------------------------------------
# Page transcripts


def emit_hocr(result: PageResult, page_width: int, page_height: int, image_name: str = "") -> str:
    """Serialize a page result as an hOCR (XHTML) document.

    One ocr_page div carries the page box; each recognized word becomes an
    ocrx_word span with title='bbox x0 y0 x1 y1' in reading order.
    """
    html = ET.Element("html", xmlns=XHTML_NS)
    head = ET.SubElement(html, "head")
    ET.SubElement(head, "title").text = result.page_id or "page"
    ET.SubElement(head, "meta", name="ocr-system", content="platter")
    ET.SubElement(head, "meta", name="ocr-capabilities", content="ocr_page ocrx_word")
    body = ET.SubElement(html, "body")
    title = f'image "{image_name}"; bbox 0 0 {page_width} {page_height}' if image_name else f"bbox 0 0 {page_width} {page_height}"
    page_div = ET.SubElement(body, "div", attrib={"class": "ocr_page", "id": "page_1", "title": title})
    for i, word in enumerate(result.words, start=1):
        b = word.detection.bbox
        span = ET.SubElement(
            page_div,
            "span",
            attrib={"class": "ocrx_word", "id": f"word_1_{i}", "title": f"bbox {b.x0} {b.y0} {b.x1} {b.y1}"},
        )
        span.text = word.text
    payload = ET.tostring(html, encoding="unicode")
    return f'<?xml version="1.0" encoding="UTF-8"?>\n{HOCR_DOCTYPE}\n{payload}\n'


def parse_hocr(document: str) -> list[tuple[BBox, str]]:
    """Recover (bbox, text) pairs from an hOCR document, in document order."""
    root = ET.fromstring(document)
    words = []
    for span in root.iter():
        if not span.tag.endswith("span") or span.get("class") != "ocrx_word":
            continue
        title = span.get("title", "")
        for part in title.split(";"):
            fields = part.split()
            if len(fields) == 5 and fields[0] == "bbox":
                x0, y0, x1, y1 = (int(v) for v in fields[1:])
                words.append((BBox(x0, y0, x1, y1), span.text or ""))
                break
    return words


def page_json(result: PageResult) -> dict:
    return {
        "page_id": result.page_id,
        "words": [
            {"bbox": list(w.detection.bbox.as_tuple()), "text": w.text} for w in result.words
        ],
    }


def page_text(result: PageResult) -> str:
    """Plain-text transcript: words joined by spaces, lines split on y bands."""
    from platter.pipeline import READING_BAND_PX

    lines: list[list[str]] = []
    current_band = None
    for word in result.words:
        band = word.detection.bbox.y0 // READING_BAND_PX
        if band != current_band:
            lines.append([])
            current_band = band
        lines[-1].append(word.text)
    return "\n".join(" ".join(line) for line in lines) + ("\n" if lines else "")


def emit_reconstruction(result: PageResult, page_width: int, page_height: int) -> np.ndarray:
    """Render recognized words back onto a blank page at their detected boxes.

    Words are drawn with the procedural glyph renderer scaled into each
    detection box; every box gets a 1px outline. Empty texts produce just the
    outline.
    """
    page = np.full((page_height, page_width), 255, dtype=np.uint8)
    for word in result.words:
        b = word.detection.bbox
        page[b.y0, b.x0 : b.x1] = 0
        page[b.y1 - 1, b.x0 : b.x1] = 0
        page[b.y0 : b.y1, b.x0] = 0
        page[b.y0 : b.y1, b.x1 - 1] = 0
        if not word.text or b.width < 3 or b.height < 3:
            continue
        rendered = synthgen.render_word(word.text)
        mask = rendered < 128
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        tight = mask[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
        scaled = imaging.nn_resize(tight, b.height - 2, b.width - 2)
        region = page[b.y0 + 1 : b.y1 - 1, b.x0 + 1 : b.x1 - 1]
        region[scaled] = 0
    return page


# ---------------------------------------------------------------------------
# Metric tables and charts


@dataclass
class ReportBundle:
    out_dir: Path
    detection_table: Path | None = None
    recognition_table: Path | None = None
    latency_table: Path | None = None
    report_json: Path | None = None
    chart_paths: list[Path] = field(default_factory=list)

    def finalize(self) -> None:
        for path in [self.detection_table, self.recognition_table, self.latency_table, self.report_json, *self.chart_paths]:
            if path is not None and not Path(path).is_file():
                raise FileNotFoundError(f"report bundle references missing file {path}")


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def detection_csv_rows(language: str, det: DetectionMetrics) -> tuple[list[str], list[list[str]]]:
    header = ["language", "iou_threshold", "tp", "fp", "fn", "precision", "recall", "f1"]
    rows = []
    for t in sorted(det.per_threshold):
        s = det.per_threshold[t]
        rows.append(
            [language, f"{t:g}", str(s.tp), str(s.fp), str(s.fn),
             fmt_csv(100 * s.precision), fmt_csv(100 * s.recall), fmt_csv(100 * s.f1)]
        )
    return header, rows


def recognition_csv_rows(
    language: str, recognition: dict[str, dict[str, RecognitionMetrics]]
) -> tuple[list[str], list[list[str]]]:
    header = ["language", "model", "isolated_crr", "isolated_wrr", "e2e_crr", "e2e_wrr", "spurious_detections"]
    rows = []
    for model in sorted(recognition):
        modes = recognition[model]
        iso = modes.get("isolated")
        e2e = modes.get("e2e")
        rows.append(
            [
                language,
                model,
                fmt_csv(iso.crr) if iso else "",
                fmt_csv(iso.wrr) if iso else "",
                fmt_csv(e2e.crr) if e2e else "",
                fmt_csv(e2e.wrr) if e2e else "",
                str(e2e.spurious_detections) if e2e else "0",
            ]
        )
    return header, rows


def latency_csv_rows(language: str, latency: dict[str, LatencyStats]) -> tuple[list[str], list[list[str]]]:
    header = ["language", "model", "mean_ms_per_word", "median_ms_per_word", "word_count"]
    rows = []
    for model in sorted(latency):
        stats = latency[model]
        rows.append(
            [language, model, fmt_csv(stats.mean_per_word * 1000), fmt_csv(stats.median_per_word * 1000), str(stats.word_count)]
        )
    return header, rows


def _chart_axes(title: str, ylabel: str):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    return fig, ax


def _save_chart(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    import matplotlib.pyplot as plt

    plt.close(fig)


def emit_detection_chart(det: DetectionMetrics, path: Path, language: str = "") -> Path:
    fig, ax = _chart_axes(f"Detection performance {language}".strip(), "percent")
    thresholds = sorted(det.per_threshold)
    x = np.arange(len(thresholds), dtype=float)
    width = 0.25
    series = [
        ("precision", [100 * det.per_threshold[t].precision for t in thresholds]),
        ("recall", [100 * det.per_threshold[t].recall for t in thresholds]),
        ("F1", [100 * det.per_threshold[t].f1 for t in thresholds]),
    ]
    for i, (name, values) in enumerate(series):
        rects = ax.bar(x + (i - 1) * width, values, width, label=name)
        ax.bar_label(rects, labels=[fmt_label(v) for v in values], fontsize=8)
    ax.set_xticks(x, [f"IoU {t:g}" for t in thresholds])
    ax.set_ylim(0, 112)
    ax.legend(loc="lower left")
    _save_chart(fig, path)
    return path


def emit_recognition_chart(
    recognition: dict[str, dict[str, RecognitionMetrics]], path: Path, language: str = ""
) -> Path:
    fig, ax = _chart_axes(f"Recognition accuracy {language}".strip(), "percent")
    models = sorted(recognition)
    x = np.arange(len(models), dtype=float)
    series = []
    if any("isolated" in recognition[m] for m in models):
        series.append(("isolated CRR", lambda m: recognition[m].get("isolated")))
        series.append(("isolated WRR", lambda m: recognition[m].get("isolated")))
    if any("e2e" in recognition[m] for m in models):
        series.append(("e2e CRR", lambda m: recognition[m].get("e2e")))
        series.append(("e2e WRR", lambda m: recognition[m].get("e2e")))
    width = 0.8 / max(1, len(series))
    for i, (name, getter) in enumerate(series):
        attr = "crr" if "CRR" in name else "wrr"
        values = [getattr(getter(m), attr) if getter(m) else 0.0 for m in models]
        rects = ax.bar(x + (i - (len(series) - 1) / 2) * width, values, width, label=name)
        ax.bar_label(rects, labels=[fmt_label(v) for v in values], fontsize=7, rotation=90, padding=2)
    ax.set_xticks(x, models)
    ax.set_ylim(0, 125)
    ax.legend(loc="lower left", fontsize=8)
    _save_chart(fig, path)
    return path


def emit_latency_chart(latency: dict[str, LatencyStats], path: Path, language: str = "") -> Path:
    fig, ax = _chart_axes(f"Mean per-word latency {language}".strip(), "milliseconds")
    models = sorted(latency)
    values = [latency[m].mean_per_word * 1000 for m in models]
    rects = ax.bar(np.arange(len(models)), values, 0.5, color="tab:purple")
    ax.bar_label(rects, labels=[fmt_label(v) for v in values], fontsize=8)
    ax.set_xticks(np.arange(len(models)), models)
    ax.set_ylim(0, max(values) * 1.2 if values else 1.0)
    _save_chart(fig, path)
    return path


def emit_charts(
    out_dir: Path | str,
    detection: DetectionMetrics | None,
    recognition: dict[str, dict[str, RecognitionMetrics]],
    latency: dict[str, LatencyStats],
    language: str = "",
) -> list[Path]:
    """Write the three comparison charts (detection, recognition, latency)."""
    if not recognition and not detection and not latency:
        raise ValueError("nothing to chart")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    if detection is not None:
        paths.append(emit_detection_chart(detection, out_dir / "detection.svg", language))
    if recognition:
        paths.append(emit_recognition_chart(recognition, out_dir / "recognition.svg", language))
    if latency:
        paths.append(emit_latency_chart(latency, out_dir / "latency.svg", language))
    return paths


def write_bundle(
    out_dir: Path | str,
    language: str,
    detection: DetectionMetrics | None,
    recognition: dict[str, dict[str, RecognitionMetrics]],
    latency: dict[str, LatencyStats],
) -> ReportBundle:
    """Write CSV tables, the JSON report, and charts; returns the bundle."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle(out_dir=out_dir)

    report: dict = {"language": language}
    if detection is not None:
        header, rows = detection_csv_rows(language, detection)
        bundle.detection_table = out_dir / "detection.csv"
        _write_csv(bundle.detection_table, header, rows)
        report["detection"] = {
            f"{t:g}": {
                "tp": s.tp, "fp": s.fp, "fn": s.fn,
                "precision_pct": 100 * s.precision,
                "recall_pct": 100 * s.recall,
                "f1_pct": 100 * s.f1,
            }
            for t, s in detection.per_threshold.items()
        }
    if recognition:
        header, rows = recognition_csv_rows(language, recognition)
        bundle.recognition_table = out_dir / "recognition.csv"
        _write_csv(bundle.recognition_table, header, rows)
        report["recognition"] = {
            model: {
                mode: {
                    "crr_pct": m.crr,
                    "wrr_pct": m.wrr,
                    "gt_char_total": m.gt_char_total,
                    "edit_total": m.edit_total,
                    "gt_word_total": m.gt_word_total,
                    "exact_match_total": m.exact_match_total,
                    "spurious_detections": m.spurious_detections,
                }
                for mode, m in modes.items()
            }
            for model, modes in recognition.items()
        }
    if latency:
        header, rows = latency_csv_rows(language, latency)
        bundle.latency_table = out_dir / "latency.csv"
        _write_csv(bundle.latency_table, header, rows)
        report["latency"] = {
            model: {
                "mean_ms_per_word": stats.mean_per_word * 1000,
                "median_ms_per_word": stats.median_per_word * 1000,
                "word_count": stats.word_count,
            }
            for model, stats in latency.items()
        }

    bundle.report_json = out_dir / "report.json"
    with open(bundle.report_json, "w", encoding="utf-8") as fh:
        json.dump(report, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")

    bundle.chart_paths = emit_charts(out_dir, detection, recognition, latency, language)
    bundle.finalize()
    return bundle
