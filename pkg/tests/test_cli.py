"""Command-line interface tests: subcommands, exit codes, artifacts."""

import json
import subprocess
import sys

import numpy as np
import pytest

from rydres.cli import main
from rydres.datagen import make_glyphs, make_laser
from rydres.io import (load_embeddings, load_idx, load_json, load_pgm,
                       load_shot_binary, load_timeseries, save_idx)


@pytest.fixture(autouse=True)
def _cache_in_tmp(tmp_path, monkeypatch):
    monkeypatch.setenv("RYDRES_CACHE", str(tmp_path / "cache"))


@pytest.fixture
def glyph_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "seed": 7,
        "backend": "qrc-exact",
        "dataset": {"kind": "glyphs", "samples": 60, "pca_dim": 2,
                    "n_train": 40, "n_test": 15},
        "encoding": {"method": "local", "n_probes": 2, "probe_dt": 0.25},
        "uncertainty": {"data_instances": 2},
        "cache": False,
    }))
    return path


class TestExitCodes:
    def test_malformed_config_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["run", "--config", str(bad)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "nope.json")]) == 3

    def test_corrupt_data_file(self, tmp_path, capsys):
        (tmp_path / "im.idx").write_bytes(b"\x00\x00\x09\x99junk")
        save_idx(tmp_path / "lb.idx", np.zeros(4, dtype=np.uint8))
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "seed": 1, "backend": "qrc-exact",
            "dataset": {"kind": "idx", "images": "im.idx",
                        "labels": "lb.idx", "pca_dim": 1,
                        "n_train": 2, "n_test": 1},
            "encoding": {"method": "local"},
        }))
        assert main(["run", "--config", str(cfg)]) == 3
        assert "offset" in capsys.readouterr().err

    def test_bad_jobs_value(self, glyph_config, capsys):
        assert main(["run", "--config", str(glyph_config), "--jobs", "0"]) == 2

    def test_invalid_backend_override(self, glyph_config, capsys):
        assert main(["run", "--config", str(glyph_config),
                     "--backend", "warp-drive"]) == 2


class TestMakeData:
    def test_laser_series(self, tmp_path, capsys):
        out = tmp_path / "laser"
        assert main(["make-data", "--kind", "laser", "--samples", "200",
                     "--out", str(out)]) == 0
        series = load_timeseries(out / "series.csv")
        assert np.array_equal(series, make_laser(200).astype(np.float64))

    def test_glyphs_idx(self, tmp_path, capsys):
        out = tmp_path / "glyphs"
        assert main(["make-data", "--kind", "glyphs", "--samples", "50",
                     "--format", "idx", "--out", str(out)]) == 0
        images = load_idx(out / "images.idx")
        labels = load_idx(out / "labels.idx")
        ref_images, ref_labels = make_glyphs(50)
        assert np.array_equal(images, ref_images)
        assert np.array_equal(labels, ref_labels)

    def test_glyphs_pgm_dir(self, tmp_path, capsys):
        out = tmp_path / "pgm"
        assert main(["make-data", "--kind", "glyphs", "--samples", "12",
                     "--format", "pgm", "--out", str(out)]) == 0
        manifest = (out / "labels.csv").read_text().strip().splitlines()
        assert len(manifest) == 12  # headerless: one filename,label per line
        ref_images, _ = make_glyphs(12)
        name = manifest[0].split(",")[0]
        assert np.array_equal(load_pgm(out / name), ref_images[0])


class TestEncode:
    def test_stdout_json(self, glyph_config, capsys):
        assert main(["encode", "--config", str(glyph_config)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["n_qubits"] == 2
        assert "regime" in payload
        assert payload["first_program"]["schema"] == "rydres.program/1"

    def test_out_file(self, glyph_config, tmp_path, capsys):
        out = tmp_path / "enc"
        assert main(["encode", "--config", str(glyph_config),
                     "--out", str(out)]) == 0
        payload = load_json(out / "encode.json")
        assert payload["n_qubits"] == 2


class TestSimulate:
    def test_exact_embeddings_csv(self, glyph_config, tmp_path, capsys):
        out = tmp_path / "sim"
        assert main(["simulate", "--config", str(glyph_config),
                     "--out", str(out)]) == 0
        emb, backend, sidecar = load_embeddings(out / "embeddings.csv")
        assert backend == "qrc"
        # 2 qubits -> Z_0, Z_1, Z_0 Z_1 per probe, over 2 probes
        assert emb.values.shape == (60, 6)
        summary = load_json(out / "simulate.json")
        assert summary["n_datapoints"] == 60

    def test_shots_artifacts_deterministic(self, glyph_config, tmp_path,
                                           capsys):
        out_a, out_b = tmp_path / "sa", tmp_path / "sb"
        for out in (out_a, out_b):
            assert main(["simulate", "--config", str(glyph_config),
                         "--backend", "qrc-shots:25", "--out", str(out)]) == 0
        assert (out_a / "shots.bin").read_bytes() == (out_b / "shots.bin").read_bytes()
        assert (out_a / "shots.csv").read_bytes() == (out_b / "shots.csv").read_bytes()
        tables = load_shot_binary(out_a / "shots.bin")
        assert len(tables) == 60
        assert tables[0].codes.shape == (2, 25)


class TestEmbedTrainRun:
    def test_embed_writes_resamples(self, glyph_config, tmp_path, capsys):
        out = tmp_path / "emb"
        assert main(["embed", "--config", str(glyph_config),
                     "--backend", "qrc-shots:20", "--out", str(out)]) == 0
        emb, backend, sidecar = load_embeddings(out / "embeddings.csv")
        assert backend == "qrc"
        resamples = sorted(out.glob("embeddings_resample_*.csv"))
        assert len(resamples) == 5
        assert "targets" in sidecar

    def test_run_emits_report(self, glyph_config, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["run", "--config", str(glyph_config),
                     "--out", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "accuracy" in printed
        report = load_json(out / "report.json")
        assert report["schema_version"] == 1
        assert report["backend"] == "qrc-exact"
        assert len(report["instances"]) == 2

    def test_run_stdout_when_no_out(self, glyph_config, capsys):
        assert main(["run", "--config", str(glyph_config)]) == 0
        out = capsys.readouterr().out
        payload, _ = json.JSONDecoder().raw_decode(out[out.index("{"):])
        assert payload["metric_name"] == "accuracy"

    def test_rerun_bit_identical_report(self, glyph_config, tmp_path, capsys):
        out_a, out_b = tmp_path / "ra", tmp_path / "rb"
        for out in (out_a, out_b):
            assert main(["run", "--config", str(glyph_config),
                         "--out", str(out)]) == 0
        assert ((out_a / "report.json").read_bytes()
                == (out_b / "report.json").read_bytes())

    def test_backend_override_recorded(self, glyph_config, tmp_path, capsys):
        out = tmp_path / "crc"
        assert main(["run", "--config", str(glyph_config), "--backend", "crc",
                     "--out", str(out)]) == 0
        assert load_json(out / "report.json")["backend"] == "crc"

    def test_seed_override_changes_metrics(self, glyph_config, tmp_path,
                                           capsys):
        out_a, out_b = tmp_path / "za", tmp_path / "zb"
        assert main(["run", "--config", str(glyph_config),
                     "--out", str(out_a)]) == 0
        assert main(["run", "--config", str(glyph_config), "--seed", "123",
                     "--out", str(out_b)]) == 0
        ra = load_json(out_a / "report.json")
        rb = load_json(out_b / "report.json")
        assert ra["seed"] == 7 and rb["seed"] == 123
        assert ra["instances"] != rb["instances"]


class TestReport:
    def test_render_emitted_dir(self, glyph_config, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["run", "--config", str(glyph_config),
                     "--out", str(out)]) == 0
        capsys.readouterr()
        assert main(["report", str(out)]) == 0
        text = capsys.readouterr().out
        assert "accuracy" in text and "qrc-exact" in text

    def test_report_out_csv(self, glyph_config, tmp_path, capsys):
        out = tmp_path / "run"
        main(["run", "--config", str(glyph_config), "--out", str(out)])
        target = tmp_path / "render"
        assert main(["report", str(out / "report.json"),
                     "--out", str(target)]) == 0
        rows = (target / "instances.csv").read_text().strip().splitlines()
        assert len(rows) == 3  # header + 2 instances

    def test_rejects_wrong_schema(self, tmp_path, capsys):
        bad = tmp_path / "r.json"
        bad.write_text(json.dumps({"schema_version": 99, "kind": "experiment"}))
        assert main(["report", str(bad)]) == 3


class TestConsoleScript:
    def test_help_via_entry_point(self):
        proc = subprocess.run([sys.executable, "-m", "rydres.cli", "--help"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "kernel-geometry" in proc.stdout
