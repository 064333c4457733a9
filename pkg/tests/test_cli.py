import json
import sys
from pathlib import Path

import numpy as np
import pytest

from platter import cli, composer, imaging, reporting, synthgen
from platter.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main


@pytest.fixture(scope="module")
def cli_pool(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    lexicon = synthgen.random_lexicon(30, seed=61)
    (root / "lex.txt").write_text("\n".join(lexicon) + "\n")
    assert main(["synth-pool", "--lexicon", str(root / "lex.txt"), "--styles", "2", "--seed", "61",
                 "--out", str(root / "pool")]) == EXIT_OK
    return {"root": root, "lexicon": lexicon, "pool": root / "pool"}


@pytest.fixture(scope="module")
def cli_dataset(cli_pool):
    out = cli_pool["root"] / "ds"
    assert main(["compose", "--pool", str(cli_pool["pool"]), "--seed", "61", "--out", str(out)]) == EXIT_OK
    return out


class TestSynthPool:
    def test_pool_counts(self, cli_pool):
        entries = synthgen.load_pool(cli_pool["pool"])
        assert len(entries) == 30 * 2

    def test_missing_lexicon_exit_2(self, tmp_path, capsys):
        code = main(["synth-pool", "--lexicon", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "p")])
        assert code == EXIT_USAGE
        assert "error" in capsys.readouterr().err

    def test_empty_lexicon_exit_2(self, tmp_path):
        lex = tmp_path / "empty.txt"
        lex.write_text("\n\n")
        assert main(["synth-pool", "--lexicon", str(lex), "--out", str(tmp_path / "p")]) == EXIT_USAGE

    def test_same_seed_identical_digest(self, cli_pool, tmp_path):
        lex = cli_pool["root"] / "lex.txt"
        assert main(["synth-pool", "--lexicon", str(lex), "--styles", "2", "--seed", "61",
                     "--out", str(tmp_path / "again")]) == EXIT_OK
        a = (cli_pool["pool"] / "pool.jsonl").read_bytes()
        b = (tmp_path / "again" / "pool.jsonl").read_bytes()
        assert a == b


class TestCompose:
    def test_pages_are_default_size(self, cli_dataset):
        manifest = composer.read_manifest(cli_dataset)
        entry = manifest.splits["train"][0]
        page = imaging.read_image(cli_dataset / entry["image"])
        assert page.shape == (1024, 1024)

    def test_rerun_identical_manifest(self, cli_pool, tmp_path):
        out = tmp_path / "ds2"
        assert main(["compose", "--pool", str(cli_pool["pool"]), "--seed", "61", "--out", str(out)]) == EXIT_OK
        a = (cli_pool["root"] / "ds" / "manifest.json").read_bytes()
        b = (out / "manifest.json").read_bytes()
        assert a == b

    def test_missing_pool_exit_2(self, tmp_path):
        assert main(["compose", "--pool", str(tmp_path / "nopool"), "--out", str(tmp_path / "ds")]) == EXIT_USAGE

    def test_config_file_drives_composition(self, cli_pool, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"seed": 5, "composer": {"page_width": 512, "page_height": 512},
                                        "splits": {"train": 1.0}}))
        out = tmp_path / "ds512"
        assert main(["compose", "--pool", str(cli_pool["pool"]), "--config", str(cfg_path), "--out", str(out)]) == EXIT_OK
        manifest = composer.read_manifest(out)
        assert list(manifest.splits) == ["train"]
        page = imaging.read_image(out / manifest.splits["train"][0]["image"])
        assert page.shape == (512, 512)

    def test_bad_config_exit_2(self, cli_pool, tmp_path):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({"composer": {"page_widht": 512}}))
        assert main(["compose", "--pool", str(cli_pool["pool"]), "--config", str(cfg_path),
                     "--out", str(tmp_path / "ds")]) == EXIT_USAGE


class TestInfer:
    def test_blank_page_builtin_empty_transcript(self, cli_pool, tmp_path, capsys):
        blank = tmp_path / "blank.png"
        imaging.write_png(blank, np.full((256, 256), 255, dtype=np.uint8))
        code = main(["infer", "--image", str(blank), "--detector", "builtin", "--recognizer", "builtin",
                     "--pool", str(cli_pool["pool"])])
        assert code == EXIT_OK
        assert capsys.readouterr().out == ""

    def test_oracle_stages_reproduce_label(self, cli_dataset, tmp_path, capsys):
        manifest = composer.read_manifest(cli_dataset)
        entry = manifest.splits["test"][0]
        label = composer.read_label(cli_dataset / entry["label"])
        code = main(["infer", "--image", str(cli_dataset / entry["image"]),
                     "--detector", "oracle", "--recognizer", "oracle",
                     "--label", str(cli_dataset / entry["label"]), "--format", "txt"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert out.split() == [w.transcript for w in label.words]

    def test_hocr_round_trip(self, cli_dataset, tmp_path):
        manifest = composer.read_manifest(cli_dataset)
        entry = manifest.splits["test"][0]
        label = composer.read_label(cli_dataset / entry["label"])
        out_path = tmp_path / "page.hocr"
        code = main(["infer", "--image", str(cli_dataset / entry["image"]),
                     "--detector", "oracle", "--recognizer", "oracle",
                     "--label", str(cli_dataset / entry["label"]),
                     "--format", "hocr", "--out", str(out_path)])
        assert code == EXIT_OK
        recovered = reporting.parse_hocr(out_path.read_text())
        assert sorted(t for _, t in recovered) == sorted(w.transcript for w in label.words)

    def test_json_format_and_reconstruction(self, cli_dataset, tmp_path, capsys):
        manifest = composer.read_manifest(cli_dataset)
        entry = manifest.splits["test"][0]
        recon = tmp_path / "recon.png"
        code = main(["infer", "--image", str(cli_dataset / entry["image"]),
                     "--detector", "oracle", "--recognizer", "oracle",
                     "--label", str(cli_dataset / entry["label"]),
                     "--format", "json", "--reconstruct", str(recon)])
        assert code == EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert payload["words"]
        assert recon.is_file()

    def test_missing_image_exit_2(self, tmp_path):
        assert main(["infer", "--image", str(tmp_path / "none.png")]) == EXIT_USAGE

    def test_adapter_failure_exit_3(self, cli_dataset, capsys):
        manifest = composer.read_manifest(cli_dataset)
        entry = manifest.splits["test"][0]
        code = main(["infer", "--image", str(cli_dataset / entry["image"]),
                     "--detector", "adapter:/nonexistent/model", "--recognizer", "oracle",
                     "--label", str(cli_dataset / entry["label"])])
        assert code == EXIT_RUNTIME


class TestEval:
    def test_oracle_oracle_perfect(self, cli_dataset, tmp_path, capsys):
        out = tmp_path / "report"
        code = main(["eval", "--dataset", str(cli_dataset), "--split", "test",
                     "--detector", "oracle", "--recognizer", "oracle", "--mode", "all",
                     "--out", str(out)])
        assert code == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        for stats in report["detection"].values():
            assert stats["precision_pct"] == 100.0
            assert stats["recall_pct"] == 100.0
            assert stats["f1_pct"] == 100.0
        modes = report["recognition"]["oracle"]
        assert modes["isolated"]["crr_pct"] == 100.0
        assert modes["e2e"]["wrr_pct"] == 100.0
        for name in ["detection.csv", "recognition.csv", "latency.csv", "detection.svg",
                     "recognition.svg", "latency.svg", "report.json"]:
            assert (out / name).is_file()

    def test_two_recognizers_share_detections(self, cli_pool, cli_dataset, tmp_path):
        out = tmp_path / "report2"
        code = main(["eval", "--dataset", str(cli_dataset), "--split", "test",
                     "--detector", "builtin", "--recognizer", "oracle", "--recognizer", "builtin",
                     "--pool", str(cli_pool["pool"]), "--mode", "e2e", "--out", str(out)])
        assert code == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        oracle_e2e = report["recognition"]["oracle"]["e2e"]
        builtin_e2e = report["recognition"]["builtin"]["e2e"]
        # same detector output: identical word totals and spurious counts
        assert oracle_e2e["gt_word_total"] == builtin_e2e["gt_word_total"]
        assert oracle_e2e["spurious_detections"] == builtin_e2e["spurious_detections"]

    def test_f1_non_increasing_thresholds(self, cli_pool, cli_dataset, tmp_path):
        out = tmp_path / "report3"
        code = main(["eval", "--dataset", str(cli_dataset), "--split", "train",
                     "--detector", "builtin", "--recognizer", "oracle",
                     "--mode", "detect", "--thresholds", "0.5,0.75,0.9", "--out", str(out)])
        assert code == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        f1s = [report["detection"][t]["f1_pct"] for t in ("0.5", "0.75", "0.9")]
        assert f1s[0] >= f1s[1] >= f1s[2]

    def test_jobs_do_not_change_metrics(self, cli_dataset, tmp_path):
        outs = []
        for jobs, name in [("1", "j1"), ("3", "j3")]:
            out = tmp_path / name
            code = main(["eval", "--dataset", str(cli_dataset), "--split", "test",
                         "--detector", "oracle", "--recognizer", "oracle", "--mode", "all",
                         "--jobs", jobs, "--out", str(out)])
            assert code == EXIT_OK
            report = json.loads((out / "report.json").read_text())
            report.pop("latency")  # timing varies
            outs.append(report)
        assert outs[0] == outs[1]

    def test_missing_split_exit_2(self, cli_dataset, tmp_path):
        assert main(["eval", "--dataset", str(cli_dataset), "--split", "nope",
                     "--recognizer", "oracle", "--out", str(tmp_path / "r")]) == EXIT_USAGE

    def test_missing_dataset_exit_2(self, tmp_path):
        assert main(["eval", "--dataset", str(tmp_path / "none"), "--split", "test",
                     "--recognizer", "oracle", "--out", str(tmp_path / "r")]) == EXIT_USAGE

    def test_builtin_recognizer_without_pool_exit_2(self, cli_dataset, tmp_path):
        assert main(["eval", "--dataset", str(cli_dataset), "--split", "test",
                     "--detector", "builtin", "--recognizer", "builtin",
                     "--out", str(tmp_path / "r")]) == EXIT_USAGE

    def test_adapter_oracle_equivalence_through_cli(self, cli_dataset, tmp_path):
        adapter_base = (
            f"{sys.executable} -m platter.oracle_adapter --dataset {cli_dataset} --split test"
        )
        out_a = tmp_path / "in_process"
        out_b = tmp_path / "adapter"
        assert main(["eval", "--dataset", str(cli_dataset), "--split", "test",
                     "--detector", "oracle", "--recognizer", "oracle", "--mode", "all",
                     "--out", str(out_a)]) == EXIT_OK
        assert main(["eval", "--dataset", str(cli_dataset), "--split", "test",
                     "--detector", f"adapter:{adapter_base} --kind detector",
                     "--recognizer", f"adapter:{adapter_base} --kind recognizer",
                     "--mode", "all", "--out", str(out_b)]) == EXIT_OK
        report_a = json.loads((out_a / "report.json").read_text())
        report_b = json.loads((out_b / "report.json").read_text())
        assert report_a["detection"] == report_b["detection"]
        rec_a = report_a["recognition"]["oracle"]
        rec_b = next(iter(report_b["recognition"].values()))
        assert rec_a == rec_b


class TestSelectorParsing:
    def test_unknown_selector(self):
        with pytest.raises(cli.UsageError):
            cli._parse_selector("magic")

    def test_adapter_selector_requires_command(self):
        with pytest.raises(cli.UsageError):
            cli._parse_selector("adapter:")

    def test_adapter_selector_parses(self):
        kind, cmd = cli._parse_selector("adapter:python model.py --flag")
        assert kind == "adapter" and cmd == "python model.py --flag"
