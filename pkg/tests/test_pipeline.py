import sys
import textwrap

import numpy as np
import pytest

from platter import adapters, composer, imaging, pipeline, synthgen, wordprep
from platter.adapters import (
    AdapterClient,
    AdapterCrashed,
    AdapterDetector,
    AdapterRecognizer,
    AdapterSpec,
    AdapterTimeout,
    ProtocolError,
    run_adapter,
)
from platter.composer import ComposerConfig, PageLabel, WordRecord, compose_page, page_rng
from platter.geometry import BBox, iou, match_boxes
from platter.pipeline import (
    BuiltinDetector,
    OracleDetector,
    OracleMiss,
    OracleRecognizer,
    PageContext,
    TemplateRecognizer,
    detect_builtin,
    infer_page,
    oracle_detector,
    oracle_recognizer,
    recognize_template,
)


@pytest.fixture(scope="module")
def one_word_page():
    crops = []
    img = synthgen.render_word("sample", synthgen.GlyphStyle(seed=51))
    crops.append((wordprep.preprocess_word(img), "sample", "synthetic"))
    cfg = ComposerConfig(seed=51)
    comp = compose_page(crops, cfg, page_rng(51, 0), page_id="one")
    return comp.page, comp.label


def write_adapter(tmp_path, name: str, body: str) -> list[str]:
    script = tmp_path / f"{name}.py"
    script.write_text(textwrap.dedent(body))
    return [sys.executable, str(script)]


ECHO_RECOGNIZER = """
    import json, sys
    for line in sys.stdin:
        msg = json.loads(line)
        if "hello" in msg:
            print(json.dumps({"ready": {"name": "echo"}}), flush=True)
            continue
        if msg.get("bye"):
            break
        print(json.dumps({"id": msg["id"], "text": "x"}), flush=True)
"""

MALFORMED_ADAPTER = """
    import json, sys
    for line in sys.stdin:
        msg = json.loads(line)
        if "hello" in msg:
            print(json.dumps({"ready": {"name": "broken"}}), flush=True)
            continue
        if msg.get("bye"):
            break
        print("this is not json", flush=True)
"""

SILENT_ADAPTER = """
    import json, sys, time
    for line in sys.stdin:
        msg = json.loads(line)
        if "hello" in msg:
            print(json.dumps({"ready": {"name": "silent"}}), flush=True)
            continue
        if msg.get("bye"):
            break
        time.sleep(60)
"""

CRASHING_ADAPTER = """
    import json, sys
    for line in sys.stdin:
        msg = json.loads(line)
        if "hello" in msg:
            print(json.dumps({"ready": {"name": "flaky"}}), flush=True)
            continue
        sys.exit(7)
"""


class TestDetectBuiltin:
    def test_blank_page(self):
        page = np.full((256, 256), 255, dtype=np.uint8)
        assert detect_builtin(page) == []

    def test_single_word_page_high_iou(self, one_word_page):
        page, label = one_word_page
        dets = detect_builtin(page)
        assert len(dets) == 1
        assert iou(dets[0].bbox, label.words[0].bbox) >= 0.9

    def test_reading_order(self):
        page = np.full((200, 400), 255, dtype=np.uint8)
        page[150:170, 20:80] = 0
        page[20:40, 200:300] = 0
        page[20:40, 30:120] = 0
        boxes = [d.bbox for d in detect_builtin(page)]
        assert boxes[0].y0 < boxes[2].y0
        assert boxes[0].x0 < boxes[1].x0

    def test_min_area_filter(self):
        page = np.full((128, 128), 255, dtype=np.uint8)
        page[60:64, 60:64] = 0  # 16 px < default min area 30
        assert detect_builtin(page) == []


class TestTemplateRecognizer:
    def test_atlas_member_scores_one(self, small_pool):
        atlas = small_pool["atlas"]
        text = sorted(atlas.entries)[3]
        crop = atlas.entries[text][0]
        got_text, similarity = recognize_template(crop, atlas)
        assert got_text == text
        assert similarity == 1.0

    def test_empty_crop_lexicographic_tiebreak(self, small_pool):
        atlas = small_pool["atlas"]
        empty = np.zeros((16, 24), dtype=bool)
        text, similarity = recognize_template(empty, atlas)
        assert similarity == 0.0
        assert text == min(atlas.entries)

    def test_gray_crop_binarized(self, small_pool):
        atlas = small_pool["atlas"]
        text = sorted(atlas.entries)[0]
        gray = imaging.mask_to_gray(atlas.entries[text][0])
        got_text, similarity = recognize_template(gray, atlas)
        assert got_text == text and similarity == 1.0

    def test_unseen_style_generalizes(self, small_pool):
        atlas = small_pool["atlas"]
        hits = 0
        words = small_pool["lexicon"][:40]
        rec = TemplateRecognizer(atlas)
        for i, word in enumerate(words):
            img = synthgen.render_word(word, synthgen.GlyphStyle(seed=900 + i))
            crop = wordprep.preprocess_word(img)
            text, _ = rec.best_match(crop)
            hits += text == word
        assert hits / len(words) >= 0.95

    def test_empty_atlas_rejected(self):
        with pytest.raises(ValueError):
            TemplateRecognizer(synthgen.Atlas())


class TestOracles:
    def test_oracle_detector_perfect(self, one_word_page):
        _, label = one_word_page
        dets = oracle_detector(label)
        matching = match_boxes([d.bbox for d in dets], label.boxes(), 0.99)
        assert len(matching.pairs) == len(label.words)
        assert matching.unmatched_detections == [] and matching.unmatched_ground_truths == []

    def test_oracle_recognizer_max_overlap(self):
        label = PageLabel(
            "p", 200, 100,
            [WordRecord(BBox(10, 10, 50, 40), "left", "syn"), WordRecord(BBox(60, 10, 120, 40), "right", "syn")],
            32,
        )
        assert oracle_recognizer(BBox(55, 10, 70, 40), label) == "right"
        assert oracle_recognizer(BBox(12, 12, 48, 38), label) == "left"

    def test_oracle_miss(self):
        label = PageLabel("p", 100, 100, [WordRecord(BBox(10, 10, 20, 20), "w", "syn")], 32)
        with pytest.raises(OracleMiss):
            oracle_recognizer(BBox(50, 50, 60, 60), label)

    def test_shifted_boxes_survive_05_not_09(self):
        widths = [40, 60, 150]
        gts = [BBox(100 * i, 0, 100 * i + w, 48) for i, w in enumerate(widths)]
        shifted = [BBox(b.x0 + 6, b.y0, b.x1 + 6, b.y1) for b in gts]
        ious = [iou(d, g) for d, g in zip(shifted, gts)]
        assert ious == [(w - 6) / (w + 6) for w in widths]  # analytic form
        assert all(v >= 0.5 for v in ious)
        assert any(v < 0.9 for v in ious) and any(v >= 0.9 for v in ious)
        at_05 = match_boxes(shifted, gts, 0.5)
        at_09 = match_boxes(shifted, gts, 0.9)
        assert len(at_05.pairs) == 3
        assert len(at_09.pairs) == 1


class TestInferPage:
    def test_blank_page(self):
        page = np.full((256, 256), 255, dtype=np.uint8)
        result = infer_page(page, BuiltinDetector(), OracleRecognizer(), PageContext(page_id="blank"))
        assert result.words == []
        assert result.total_latency >= result.detect_latency

    def test_oracle_stages_closed_loop(self, one_word_page):
        page, label = one_word_page
        ctx = PageContext(page_id=label.page_id, label=label)
        result = infer_page(page, OracleDetector(), OracleRecognizer(), ctx)
        assert [w.text for w in result.words] == [w.transcript for w in label.words]
        assert [w.detection.bbox for w in result.words] == label.boxes()

    def test_stage_purity(self, one_word_page):
        page, label = one_word_page
        ctx = PageContext(page_id=label.page_id, label=label)
        a = infer_page(page, OracleDetector(), OracleRecognizer(), ctx)
        b = infer_page(page, OracleDetector(), OracleRecognizer(), ctx)
        assert [(w.detection, w.text) for w in a.words] == [(w.detection, w.text) for w in b.words]

    def test_crop_pad_clipped_at_bounds(self):
        page = np.full((60, 60), 255, dtype=np.uint8)
        page[0:20, 0:20] = 0

        seen = {}

        class Probe:
            def recognize(self, crop, box, ctx):
                seen["shape"] = crop.shape
                return "p"

        class CornerDetector:
            def detect(self, page, ctx):
                return [pipeline.Detection(BBox(0, 0, 20, 20))]

        infer_page(page, CornerDetector(), Probe(), PageContext(), pad=2)
        assert seen["shape"] == (22, 22)  # pad clipped at the top-left corner

    def test_stage_error_carries_context(self, one_word_page):
        page, label = one_word_page

        class Boom:
            def recognize(self, crop, box, ctx):
                raise RuntimeError("nope")

        ctx = PageContext(page_id="pg7", label=label)
        with pytest.raises(pipeline.StageError) as err:
            infer_page(page, OracleDetector(), Boom(), ctx)
        assert "pg7" in str(err.value)


class TestAdapterProtocol:
    def test_echo_recognizer(self, tmp_path):
        cmd = write_adapter(tmp_path, "echo", ECHO_RECOGNIZER)
        spec = AdapterSpec(kind="recognizer", command=cmd)
        requests = [{"id": i, "image_png_b64": "", "language": "syn"} for i in range(1, 4)]
        responses = run_adapter(spec, requests)
        assert [r["id"] for r in responses] == [1, 2, 3]
        assert all(r["text"] == "x" for r in responses)

    def test_malformed_line_names_line_number(self, tmp_path):
        cmd = write_adapter(tmp_path, "broken", MALFORMED_ADAPTER)
        spec = AdapterSpec(kind="recognizer", command=cmd)
        with pytest.raises(ProtocolError) as err:
            run_adapter(spec, [{"id": 5, "image_png_b64": "", "language": ""}])
        assert "line 2" in str(err.value)  # line 1 was the handshake
        assert err.value.request_id == 5

    def test_timeout(self, tmp_path):
        cmd = write_adapter(tmp_path, "silent", SILENT_ADAPTER)
        spec = AdapterSpec(kind="recognizer", command=cmd, request_timeout=0.5)
        with pytest.raises(AdapterTimeout) as err:
            run_adapter(spec, [{"id": 9, "image_png_b64": "", "language": ""}])
        assert err.value.request_id == 9

    def test_crash(self, tmp_path):
        cmd = write_adapter(tmp_path, "flaky", CRASHING_ADAPTER)
        spec = AdapterSpec(kind="recognizer", command=cmd)
        with pytest.raises(AdapterCrashed) as err:
            run_adapter(spec, [{"id": 2, "image_png_b64": "", "language": ""}])
        assert err.value.request_id == 2

    def test_launch_failure(self):
        spec = AdapterSpec(kind="detector", command=["/nonexistent/binary"])
        with pytest.raises(AdapterCrashed):
            run_adapter(spec, [])

    def test_handshake_name_recorded(self, tmp_path):
        cmd = write_adapter(tmp_path, "echo2", ECHO_RECOGNIZER)
        with AdapterClient(AdapterSpec(kind="recognizer", command=cmd)) as client:
            assert client.name == "echo"

    def test_bad_kind_rejected(self):
        with pytest.raises(ValueError):
            AdapterSpec(kind="segmenter", command=["x"])


class TestOracleAdapterEquivalence:
    def test_adapter_path_matches_in_process(self, small_dataset):
        dataset = small_dataset["dir"]
        entry = small_dataset["manifest"].splits["test"][0]
        page = imaging.read_image(dataset / entry["image"])
        label = composer.read_label(dataset / entry["label"])
        ctx = PageContext(page_id=label.page_id, language="synthetic", label=label)

        in_process = infer_page(page, OracleDetector(), OracleRecognizer(), ctx)

        base = [sys.executable, "-m", "platter.oracle_adapter", "--dataset", str(dataset), "--split", "test"]
        det = AdapterDetector(base + ["--kind", "detector"])
        rec = AdapterRecognizer(base + ["--kind", "recognizer"])
        try:
            external = infer_page(page, det, rec, ctx)
        finally:
            det.close()
            rec.close()

        assert [w.detection.bbox for w in external.words] == [w.detection.bbox for w in in_process.words]
        assert [w.text for w in external.words] == [w.text for w in in_process.words]
