import json
from pathlib import Path

import pytest

from octex.cli import main
from octex.harvest import build_test_dicom


def run(argv):
    return main([str(a) for a in argv])


@pytest.fixture()
def synth_dir(tmp_path):
    out = tmp_path / "synth"
    assert run(["synth", "--kind", "both", "-n", "4", "--seed", "21", "--out", out]) == 0
    return out


class TestSynthVerb:
    def test_outputs_exist(self, synth_dir):
        streams = list((synth_dir / "streams").glob("*.tokens.json"))
        assert len(streams) == 8  # 4 rnfl + 4 gcc
        assert (synth_dir / "gold.csv").is_file()
        assert (synth_dir / "ledger.csv").is_file()
        assert (synth_dir / "profile.json").is_file()

    def test_seed_flag_recorded(self, synth_dir):
        profile = json.loads((synth_dir / "profile.json").read_text())
        assert profile["seed"] == 21

    def test_same_seed_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run(["synth", "--kind", "rnfl", "-n", "3", "--seed", "5", "--out", out]) == 0
        for f in sorted((a / "streams").glob("*")):
            assert f.read_bytes() == (b / "streams" / f.name).read_bytes()
        assert (a / "gold.csv").read_bytes() == (b / "gold.csv").read_bytes()


class TestExtractVerb:
    def test_extract_all_streams(self, synth_dir, tmp_path):
        out = tmp_path / "ex"
        assert run(["extract", synth_dir / "streams", "--out", out]) == 0
        extractions = list(out.glob("*.extraction.json"))
        assert len(extractions) == 8
        assert (out / "extractions.csv").is_file()
        doc = json.loads(extractions[0].read_text())
        assert {"report_id", "kind", "fields"} <= set(doc)

    def test_parallel_output_byte_identical(self, synth_dir, tmp_path):
        serial, parallel = tmp_path / "s", tmp_path / "p"
        assert run(["extract", synth_dir / "streams", "--out", serial, "--parallel", "1"]) == 0
        assert run(["extract", synth_dir / "streams", "--out", parallel, "--parallel", "4"]) == 0
        for f in sorted(serial.iterdir()):
            assert f.read_bytes() == (parallel / f.name).read_bytes()

    def test_schema_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.tokens.json"
        bad.write_text('{"schema_version": "1", "report_id": "x", "report_kind": "rnfl", "tokens": [{"id": 0, "text": "a", "conf": 2.0, "bbox": [0,0,0.1,0.1], "crop_id": "signal"}]}')
        assert run(["extract", bad, "--out", tmp_path / "o"]) == 4


class TestValidateVerb:
    def test_clean_reports_exit_zero(self, synth_dir, tmp_path):
        ex, val = tmp_path / "ex", tmp_path / "val"
        run(["extract", synth_dir / "streams", "--out", ex])
        code = run([
            "validate", ex, "--streams", synth_dir / "streams", "--out", val,
        ])
        assert code == 0
        assert (val / "qc_flags.csv").is_file()
        validated = list(val.glob("*.validated.json"))
        assert len(validated) == 8

    def test_reject_flag_exits_three(self, synth_dir, tmp_path):
        streams_dir = tmp_path / "streams"
        streams_dir.mkdir()
        source = sorted((synth_dir / "streams").glob("rnfl-*.tokens.json"))[0]
        doc = json.loads(source.read_text())
        # plant an out-of-range colorbar value squarely in a clock slot
        doc["tokens"].append({
            "id": 9999, "text": "350", "conf": 0.9999,
            "bbox": [0.46, 0.84, 0.54, 0.9], "crop_id": "clock_od",
        })
        (streams_dir / source.name).write_text(json.dumps(doc))
        ex, val = tmp_path / "ex", tmp_path / "val"
        run(["extract", streams_dir, "--out", ex])
        code = run(["validate", ex, "--streams", streams_dir, "--out", val])
        assert code == 3
        flags = (val / "qc_flags.csv").read_text()
        assert "out_of_range" in flags
        assert "reject" in flags


class TestEvalVerb:
    def test_eval_outputs(self, synth_dir, tmp_path, capsys):
        ex, ev = tmp_path / "ex", tmp_path / "ev"
        run(["extract", synth_dir / "streams", "--out", ex])
        code = run(["eval", "--pred", ex, "--gold", synth_dir / "gold.csv", "--out", ev])
        assert code == 0
        assert (ev / "rnfl_table.txt").is_file()
        assert (ev / "gcc_table.txt").is_file()
        assert (ev / "precision.json").is_file()
        assert (ev / "precision.csv").is_file()
        assert (ev / "rnfl_precision.png").stat().st_size > 1000
        assert (ev / "gcc_precision.png").stat().st_size > 1000
        assert "1.0000" in (ev / "rnfl_table.txt").read_text()

    def test_orphan_prediction_exits_four(self, synth_dir, tmp_path, capsys):
        ex = tmp_path / "ex"
        run(["extract", synth_dir / "streams", "--out", ex])
        gold_lines = (synth_dir / "gold.csv").read_text().splitlines()
        filtered = [gold_lines[0]] + [l for l in gold_lines[1:] if "rnfl-00000" not in l]
        gold_path = tmp_path / "gold.csv"
        gold_path.write_text("\n".join(filtered) + "\n")
        code = run(["eval", "--pred", ex, "--gold", gold_path, "--out", tmp_path / "ev"])
        assert code == 4
        assert "rnfl-00000" in capsys.readouterr().err


class TestCropPlanVerb:
    def test_plan_written(self, tmp_path):
        out = tmp_path / "plan.json"
        assert run(["crop-plan", "--kind", "rnfl", "--out", out]) == 0
        plan = json.loads(out.read_text())
        assert len(plan) == 9
        assert {"crop_id", "rect"} <= set(plan[0])


class TestHarvestVerb:
    def test_empty_dir_succeeds_with_empty_manifest(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        out = tmp_path / "h"
        assert run(["harvest", empty, "--out", out]) == 0
        assert (out / "manifest.jsonl").read_text() == ""

    def test_harvest_fixture_dir(self, tmp_path):
        src = tmp_path / "dicoms"
        src.mkdir()
        (src / "a.dcm").write_bytes(build_test_dicom("RNFL OU Analysis", b"%PDF-1.4 x"))
        (src / "b.bin").write_bytes(b"junk")
        out = tmp_path / "h"
        assert run(["harvest", src, "--out", out]) == 0
        lines = (out / "manifest.jsonl").read_text().splitlines()
        assert len(lines) == 1
        entry = json.loads(lines[0])
        assert entry["report_kind"] == "rnfl"
        assert (out / f"{entry['sop_instance_uid']}.pdf").read_bytes() == b"%PDF-1.4 x"
        assert "no_dicm_marker" in (out / "skipped.jsonl").read_text()

    def test_missing_root_is_fatal(self, tmp_path):
        assert run(["harvest", tmp_path / "nope", "--out", tmp_path / "o"]) == 1


class TestUsage:
    def test_unknown_verb_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            run(["frobnicate"])
        assert exc.value.code == 2

    def test_config_file_supplies_defaults(self, synth_dir, tmp_path, monkeypatch):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"output_dir": str(tmp_path / "cfg_out"), "parallelism": 2}))
        monkeypatch.setenv("OCTEX_CONFIG", str(config))
        assert run(["extract", synth_dir / "streams"]) == 0
        assert (tmp_path / "cfg_out" / "extractions.csv").is_file()

    def test_bad_config_exits_two(self, tmp_path, monkeypatch):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"parallelism": 0}))
        monkeypatch.setenv("OCTEX_CONFIG", str(config))
        assert run(["crop-plan", "--kind", "rnfl"]) == 2
