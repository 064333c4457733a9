"""Command-line interface: pool synthesis, page composition, inference, and
evaluation with a single configuration file and a single seed.

Exit codes: 0 success, 2 input/config error, 3 adapter or runtime stage error.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
import threading
import time
from pathlib import Path

import numpy as np

from platter import composer, imaging, metrics, pipeline, reporting, synthgen, wordprep
from platter.adapters import AdapterDetector, AdapterError, AdapterRecognizer
from platter.config import ConfigError, load_config
from platter.geometry import BBox

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    pass


def _jobs_default() -> int:
    env = os.environ.get("PLATTER_JOBS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Stage selection


def _parse_selector(sel: str) -> tuple[str, str]:
    if sel in ("builtin", "oracle"):
        return sel, ""
    if sel.startswith("adapter:"):
        cmd = sel[len("adapter:") :].strip()
        if not cmd:
            raise UsageError("adapter selector needs a command, e.g. adapter:'python my_model.py'")
        return "adapter", cmd
    raise UsageError(f"unknown stage selector {sel!r} (expected builtin | oracle | adapter:CMD)")


class StagePool:
    """Builds detector/recognizer stages per selector; adapter stages are
    created once per worker thread (each adapter process is single-client)."""

    def __init__(self, atlas: synthgen.Atlas | None):
        self.atlas = atlas
        self._local = threading.local()
        self._shared: dict[str, object] = {}
        self._lock = threading.Lock()
        self._adapters: list[object] = []

    def detector(self, sel: str):
        kind, cmd = _parse_selector(sel)
        if kind == "builtin":
            return self._shared_stage("det:builtin", pipeline.BuiltinDetector)
        if kind == "oracle":
            return self._shared_stage("det:oracle", pipeline.OracleDetector)
        return self._thread_stage(f"det:{cmd}", lambda: self._track(AdapterDetector(cmd)))

    def recognizer(self, sel: str):
        kind, cmd = _parse_selector(sel)
        if kind == "builtin":
            if self.atlas is None:
                raise UsageError("builtin recognizer needs --pool DIR to build its atlas")
            return self._shared_stage("rec:builtin", lambda: pipeline.TemplateRecognizer(self.atlas))
        if kind == "oracle":
            return self._shared_stage("rec:oracle", pipeline.OracleRecognizer)
        return self._thread_stage(f"rec:{cmd}", lambda: self._track(AdapterRecognizer(cmd)))

    def _shared_stage(self, key: str, factory):
        with self._lock:
            if key not in self._shared:
                self._shared[key] = factory()
            return self._shared[key]

    def _thread_stage(self, key: str, factory):
        cache = getattr(self._local, "stages", None)
        if cache is None:
            cache = {}
            self._local.stages = cache
        if key not in cache:
            cache[key] = factory()
        return cache[key]

    def _track(self, adapter):
        with self._lock:
            self._adapters.append(adapter)
        return adapter

    def close(self) -> None:
        for adapter in self._adapters:
            adapter.close()


# ---------------------------------------------------------------------------
# Commands


def cmd_synth_pool(args) -> int:
    lexicon_path = Path(args.lexicon)
    if not lexicon_path.is_file():
        raise UsageError(f"lexicon file not found: {lexicon_path}")
    words = [w.strip() for w in lexicon_path.read_text(encoding="utf-8").splitlines() if w.strip()]
    if not words:
        raise UsageError(f"lexicon file {lexicon_path} is empty")
    entries, atlas = synthgen.build_pool(
        words,
        styles_per_word=args.styles,
        seed=args.seed,
        out_dir=args.out,
        language=args.language,
        ruled_line=args.ruled_line,
        border_noise=args.border_noise,
    )
    print(f"pool size: {len(entries)} images ({len(atlas)} words x {args.styles} styles) -> {args.out}")
    return EXIT_OK


def cmd_compose(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    page_cfg = composer.ComposerConfig(**{**_asdict(cfg.composer), "seed": seed})
    try:
        manifest = composer.compose_dataset(
            args.pool, page_cfg, cfg.splits, seed=seed, out_dir=args.out, prep=cfg.prep
        )
    except (FileNotFoundError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    print(f"{'split':<8}{'pages':>8}{'words':>8}")
    for split, pages in manifest.splits.items():
        words = 0
        for entry in pages:
            words += len(composer.read_label(Path(args.out) / entry["label"]).words)
        print(f"{split:<8}{len(pages):>8}{words:>8}")
    if manifest.skipped_words:
        print(f"skipped: {len(manifest.skipped_words)} (see manifest.json)")
    return EXIT_OK


def _asdict(dc) -> dict:
    from dataclasses import asdict

    return asdict(dc)


def _load_atlas(pool: str | None) -> synthgen.Atlas | None:
    if pool is None:
        return None
    pool_path = Path(pool)
    if not (pool_path / "pool.jsonl").is_file():
        raise UsageError(f"no pool manifest at {pool_path}/pool.jsonl")
    return synthgen.atlas_from_pool(pool_path)


def cmd_infer(args) -> int:
    image_path = Path(args.image)
    if not image_path.is_file():
        raise UsageError(f"image not found: {image_path}")
    page = imaging.to_gray(imaging.read_image(image_path))

    label = None
    if args.label:
        label = composer.read_label(args.label)
    ctx = pipeline.PageContext(page_id=image_path.stem, language=args.language, label=label)

    pool = StagePool(_load_atlas(args.pool))
    try:
        detector = pool.detector(args.detector)
        recognizer = pool.recognizer(args.recognizer)
        result = pipeline.infer_page(page, detector, recognizer, ctx, pad=args.pad)
    finally:
        pool.close()

    h, w = page.shape
    if args.format == "hocr":
        payload = reporting.emit_hocr(result, w, h, image_name=image_path.name)
    elif args.format == "json":
        payload = json.dumps(reporting.page_json(result), ensure_ascii=False, indent=2) + "\n"
    else:
        payload = reporting.page_text(result)

    if args.out and args.out != "-":
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)

    if args.reconstruct is not None:
        recon_path = args.reconstruct or f"{image_path.stem}_reconstruction.png"
        imaging.write_png(recon_path, reporting.emit_reconstruction(result, w, h))
        print(f"reconstruction -> {recon_path}", file=sys.stderr)
    return EXIT_OK


def _load_split(dataset: Path, split: str) -> list[tuple[str, np.ndarray, composer.PageLabel]]:
    if not (dataset / "manifest.json").is_file():
        raise UsageError(f"no dataset manifest at {dataset}/manifest.json")
    manifest = composer.read_manifest(dataset)
    if split not in manifest.splits:
        raise UsageError(f"split {split!r} not found (available: {sorted(manifest.splits)})")
    pages = []
    for entry in manifest.splits[split]:
        label_path = dataset / entry["label"]
        if not label_path.is_file():
            raise UsageError(f"missing label file {label_path}")
        label = composer.read_label(label_path)
        page = imaging.to_gray(imaging.read_image(dataset / entry["image"]))
        pages.append((label.page_id, page, label))
    return pages


def evaluate_split(
    pages: list[tuple[str, np.ndarray, composer.PageLabel]],
    detector_sel: str,
    recognizer_sels: list[str],
    mode: str,
    thresholds: list[float],
    language: str,
    atlas: synthgen.Atlas | None,
    pad: int = pipeline.DEFAULT_CROP_PAD,
    jobs: int = 1,
):
    """Run the selected evaluations; detection runs once and is shared by
    every recognizer so models are compared on identical inputs."""
    pool = StagePool(atlas)
    need_detect = mode in ("detect", "e2e", "all")
    need_isolated = mode in ("isolated", "all")
    need_e2e = mode in ("e2e", "all")
    try:
        detection_metrics = None
        detections_per_page: list[list[pipeline.Detection]] = [[] for _ in pages]
        detect_latencies = [0.0] * len(pages)

        def run_detect(i: int):
            page_id, page, label = pages[i]
            ctx = pipeline.PageContext(page_id=page_id, language=language, label=label)
            t0 = time.perf_counter()
            dets = pool.detector(detector_sel).detect(page, ctx)
            detect_latencies[i] = time.perf_counter() - t0
            detections_per_page[i] = sorted(dets, key=lambda d: pipeline.reading_order_key(d.bbox))

        if need_detect:
            _run_parallel(run_detect, len(pages), jobs)
            detection_metrics = metrics.detection_prf(
                [[d.bbox for d in dets] for dets in detections_per_page],
                [[w.bbox for w in label.words] for _, _, label in pages],
                thresholds,
            )

        recognition: dict[str, dict[str, metrics.RecognitionMetrics]] = {}
        latency: dict[str, metrics.LatencyStats] = {}
        for sel in recognizer_sels:
            modes: dict[str, metrics.RecognitionMetrics] = {}
            if need_isolated:
                pairs_per_page: list[list[tuple[str, str]]] = [[] for _ in pages]

                def run_isolated(i: int, sel=sel, out=pairs_per_page):
                    page_id, page, label = pages[i]
                    ctx = pipeline.PageContext(page_id=page_id, language=language, label=label)
                    rec = pool.recognizer(sel)
                    for word in label.words:
                        crop = pipeline.crop_box(page, word.bbox, 0)
                        out[i].append((word.transcript, rec.recognize(crop, word.bbox, ctx)))

                _run_parallel(run_isolated, len(pages), jobs)
                modes["isolated"] = metrics.isolated_eval([p for page_pairs in pairs_per_page for p in page_pairs])
            if need_e2e:
                results: list[pipeline.PageResult | None] = [None] * len(pages)

                def run_e2e(i: int, sel=sel, out=results):
                    page_id, page, label = pages[i]
                    ctx = pipeline.PageContext(page_id=page_id, language=language, label=label)
                    rec = pool.recognizer(sel)
                    words = []
                    for det in detections_per_page[i]:
                        crop = pipeline.crop_box(page, det.bbox, pad)
                        t0 = time.perf_counter()
                        text = rec.recognize(crop, det.bbox, ctx)
                        words.append(pipeline.RecognizedWord(det, text, time.perf_counter() - t0))
                    out[i] = pipeline.PageResult(
                        page_id=page_id,
                        words=words,
                        detect_latency=detect_latencies[i],
                        total_latency=detect_latencies[i] + sum(w.latency for w in words),
                    )

                _run_parallel(run_e2e, len(pages), jobs)
                page_results = [r for r in results if r is not None]
                modes["e2e"] = metrics.e2e_eval(page_results, {pid: label for pid, _, label in pages})
                try:
                    latency[sel] = metrics.latency_stats(page_results)
                except metrics.ZeroWords:
                    pass
            if modes:
                recognition[sel] = modes
        return detection_metrics, recognition, latency
    finally:
        pool.close()


def _run_parallel(fn, count: int, jobs: int) -> None:
    if jobs <= 1 or count <= 1:
        for i in range(count):
            fn(i)
        return
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, i) for i in range(count)]
        for fut in futures:
            fut.result()


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    thresholds = [float(t) for t in args.thresholds.split(",")] if args.thresholds else cfg.thresholds
    dataset = Path(args.dataset)
    pages = _load_split(dataset, args.split)
    if not pages:
        raise UsageError(f"split {args.split!r} has no pages")
    atlas = _load_atlas(args.pool)
    language = args.language or cfg.language

    detection, recognition, latency = evaluate_split(
        pages,
        args.detector,
        args.recognizer,
        args.mode,
        thresholds,
        language,
        atlas,
        pad=args.pad,
        jobs=args.jobs,
    )

    out_dir = Path(args.out)
    bundle = reporting.write_bundle(out_dir, language, detection, recognition, latency)
    if detection is not None:
        for t in sorted(detection.per_threshold):
            s = detection.per_threshold[t]
            print(
                f"detection iou={t:g}: P={100*s.precision:.2f} R={100*s.recall:.2f} F1={100*s.f1:.2f}"
                f" (tp={s.tp} fp={s.fp} fn={s.fn})"
            )
    for model, modes in recognition.items():
        for mode_name, m in modes.items():
            print(f"{model} {mode_name}: CRR={m.crr:.2f} WRR={m.wrr:.2f}")
    for model, stats in latency.items():
        print(f"{model} latency: {stats.mean_per_word*1000:.2f} ms/word over {stats.word_count} words")
    print(f"report bundle -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="platter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-pool", help="render a synthetic word-image pool and atlas")
    p.add_argument("--lexicon", required=True, help="text file, one word per line")
    p.add_argument("--styles", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--language", default="synthetic")
    p.add_argument("--ruled-line", action="store_true", help="render a ruling-line artifact on every image")
    p.add_argument("--border-noise", action="store_true", help="render border speckle on every image")
    p.set_defaults(func=cmd_synth_pool)

    p = sub.add_parser("compose", help="compose labeled pages from a word pool")
    p.add_argument("--pool", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("infer", help="run two-stage OCR on a single page image")
    p.add_argument("--image", required=True)
    p.add_argument("--detector", default="builtin", help="builtin | oracle | adapter:CMD")
    p.add_argument("--recognizer", default="builtin", help="builtin | oracle | adapter:CMD")
    p.add_argument("--pool", default=None, help="word pool dir (atlas for the builtin recognizer)")
    p.add_argument("--label", default=None, help="page label JSON (required by oracle stages)")
    p.add_argument("--language", default="synthetic")
    p.add_argument("--format", choices=["hocr", "json", "txt"], default="txt")
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.add_argument("--reconstruct", nargs="?", const="", default=None, help="write a reconstruction image")
    p.add_argument("--pad", type=int, default=pipeline.DEFAULT_CROP_PAD)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="evaluate detector/recognizer stages on a dataset split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--detector", default="builtin")
    p.add_argument("--recognizer", action="append", required=True, help="repeatable")
    p.add_argument("--mode", choices=["detect", "isolated", "e2e", "all"], default="all")
    p.add_argument("--thresholds", default=None, help="comma-separated IoU thresholds")
    p.add_argument("--pool", default=None)
    p.add_argument("--language", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--pad", type=int, default=pipeline.DEFAULT_CROP_PAD)
    p.add_argument("--jobs", type=int, default=_jobs_default(), help="page-level parallelism (env PLATTER_JOBS)")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AdapterError as exc:
        rid = f" (request id {exc.request_id})" if exc.request_id is not None else ""
        print(f"adapter error{rid}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except pipeline.StageError as exc:
        cause = exc.__cause__
        if isinstance(cause, AdapterError) and cause.request_id is not None:
            print(f"adapter error (request id {cause.request_id}): {exc}", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (wordprep.EmptyContent, metrics.ZeroWords) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
