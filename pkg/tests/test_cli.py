"""End-to-end command-line runs on a small synthetic dataset."""

import filecmp
import json
from pathlib import Path

import pytest

from xprobe.cli import main


def _base_config(out_dir, **extra):
    """Three 9x9 images on a 3x3 grid with one model of each response kind."""
    cfg = {
        "out": str(out_dir),
        "seed": 7,
        "jobs": 1,
        "grid": {"rows": 3, "cols": 3},
        "baseline": {"kind": "grey"},
        "dataset": {
            "kind": "synthetic",
            "count": 3,
            "height": 9,
            "width": 9,
            "channels": 1,
            "low": 0.3,
            "high": 1.0,
        },
        "models": [
            {
                "kind": "synthetic",
                "name": "conj",
                "spec": {"kind": "conjunctive", "required": [0, 4, 8]},
            },
            {
                "kind": "synthetic",
                "name": "disj",
                "spec": {"kind": "disjunctive", "groups": [[0, 1], [7, 8]]},
            },
            {
                "kind": "synthetic",
                "name": "addi",
                "spec": {"kind": "additive", "weights": [1.0 / 9.0] * 9},
            },
        ],
        "beam": {"beam_width": 10, "confidence_fraction": 0.9},
        "count": {"thresholds": [0.9, 0.8, 0.7, 0.6, 0.5], "stop_fraction": 0.5},
        "saliency": {
            "steps": 10,
            "n_masks": 80,
            "cell_rows": 3,
            "cell_cols": 3,
            "keep_prob": 0.5,
        },
        "crosstest": {"dims": 2, "kernel": "rbf"},
        "report": {"max_children": 3, "sag_images": 1},
    }
    cfg.update(extra)
    return cfg


def _write_config(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _tree_bytes(root: Path) -> dict:
    return {
        str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()
    }


class TestExitCodes:
    def test_missing_config(self, tmp_path, capsys):
        code = main(["mse", "--config", str(tmp_path / "absent.json")])
        assert code == 2
        assert "config error:" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["mse", "--config", str(path)]) == 2
        assert "config error:" in capsys.readouterr().err

    def test_unknown_dataset_kind(self, tmp_path, capsys):
        cfg = _base_config(tmp_path / "out")
        cfg["dataset"] = {"kind": "parquet"}
        assert main(["mse", "--config", _write_config(tmp_path, cfg)]) == 2
        assert "unknown dataset kind" in capsys.readouterr().err

    def test_stage_order_enforced(self, tmp_path, capsys):
        config = _write_config(tmp_path, _base_config(tmp_path / "out"))
        assert main(["subexp", "--config", config]) == 2
        assert "run the mse stage first" in capsys.readouterr().err

    def test_crosstest_needs_enough_models(self, tmp_path, capsys):
        cfg = _base_config(tmp_path / "out")
        cfg["models"] = cfg["models"][:2]
        assert main(["crosstest", "--config", _write_config(tmp_path, cfg)]) == 2
        assert "at least 3 models" in capsys.readouterr().err

    def test_grid_flag_must_parse(self, tmp_path, capsys):
        config = _write_config(tmp_path, _base_config(tmp_path / "out"))
        assert main(["mse", "--config", config, "--grid", "9"]) == 2
        assert "--grid expects RxC" in capsys.readouterr().err

    def test_grid_flag_weight_mismatch(self, tmp_path, capsys):
        config = _write_config(tmp_path, _base_config(tmp_path / "out"))
        # the additive model declares nine weights; a 2x2 grid cannot host them
        assert main(["mse", "--config", config, "--grid", "3x3"]) == 0
        assert main(["mse", "--config", config, "--grid", "2x2"]) == 2

    def test_bad_beam_width_flag(self, tmp_path, capsys):
        config = _write_config(tmp_path, _base_config(tmp_path / "out"))
        assert main(["mse", "--config", config, "--beam-width", "0"]) == 2


class TestMseStage:
    def test_outputs_and_contents(self, tmp_path):
        out = tmp_path / "out"
        config = _write_config(tmp_path, _base_config(out))
        assert main(["mse", "--config", config]) == 0
        for name in ("conj", "disj", "addi"):
            lines = (out / f"{name}.mse.jsonl").read_text().splitlines()
            assert lines, f"{name} produced no MSE records"
            for line in lines:
                record = json.loads(line)
                assert set(record) >= {"image_id", "mask", "confidence"}
        stats = (out / "mse_stats.csv").read_text().splitlines()
        assert stats[0].startswith("model,explained_images,unexplained_images")
        assert len(stats) == 4

    def test_conjunctive_single_mse_per_image(self, tmp_path):
        out = tmp_path / "out"
        config = _write_config(tmp_path, _base_config(out))
        main(["mse", "--config", config])
        records = [
            json.loads(line) for line in (out / "conj.mse.jsonl").read_text().splitlines()
        ]
        # bright images occupy every patch, so the only MSE is the required set
        assert len(records) == 3
        assert {r["mask"] for r in records} == {"0x111"}


class TestFullPipeline:
    @pytest.fixture
    def finished_run(self, tmp_path):
        out = tmp_path / "out"
        config = _write_config(tmp_path, _base_config(out))
        for command in ("mse", "subexp", "saliency", "crosstest", "report"):
            assert main([command, "--config", config]) == 0, command
        return out

    def test_file_inventory(self, finished_run):
        expected = [
            "mse_stats.csv",
            "conj.mse.jsonl",
            "conj.counts.csv",
            "conj.nodes.jsonl",
            "conj.saliency.csv",
            "maps/conj/synth-0000.fmap",
            "crosstest_insertion.csv",
            "crosstest_deletion.csv",
            "embedding.csv",
            "embedding.svg",
            "report/stats.csv",
            "report/stats.json",
            "report/conj.size_hist.svg",
            "report/conj.percent_explained.csv",
            "report/conj.percent_explained.svg",
            "report/sag/conj/synth-0000.dot",
        ]
        for rel in expected:
            assert (finished_run / rel).exists(), rel
        assert not list(finished_run.rglob("*.tmp"))

    def test_saliency_csv_schema(self, finished_run):
        lines = (finished_run / "addi.saliency.csv").read_text().splitlines()
        assert lines[0] == (
            "image_id,class_id,insertion_auc,deletion_auc,insertion_norm,deletion_norm"
        )
        assert len(lines) == 4
        first = lines[1].split(",")
        assert first[0] == "synth-0000"
        assert 0.0 <= float(first[2]) <= 1.0

    def test_crosstest_matrix_schema(self, finished_run):
        lines = (finished_run / "crosstest_insertion.csv").read_text().splitlines()
        assert lines[0] == "evaluator,conj,disj,addi"
        assert len(lines) == 4
        embedding = (finished_run / "embedding.csv").read_text().splitlines()
        assert embedding[0] == "model,x0,x1"
        assert len(embedding) == 4

    def test_additive_counts_match_uniform_census(self, finished_run):
        lines = (finished_run / "addi.counts.csv").read_text().splitlines()
        assert lines[0] == "image_id,mse_count,c90,c80,c70,c60,c50"
        for row in lines[1:]:
            assert row.split(",")[1:] == ["1", "0", "9", "45", "129", "255"]


class TestDeterminism:
    def test_rerun_is_byte_identical(self, tmp_path):
        out = tmp_path / "out"
        config = _write_config(tmp_path, _base_config(out))
        for command in ("mse", "subexp", "saliency", "report"):
            assert main([command, "--config", config]) == 0
        first = _tree_bytes(out)
        for command in ("mse", "subexp", "saliency", "report"):
            assert main([command, "--config", config]) == 0
        assert _tree_bytes(out) == first

    def test_parallel_jobs_match_serial(self, tmp_path):
        serial_out = tmp_path / "serial"
        parallel_out = tmp_path / "parallel"
        config_serial = _write_config(tmp_path, _base_config(serial_out), "a.json")
        config_parallel = _write_config(
            tmp_path, _base_config(parallel_out, jobs=3), "b.json"
        )
        assert main(["mse", "--config", config_serial]) == 0
        assert main(["mse", "--config", config_parallel]) == 0
        match, mismatch, errors = filecmp.cmpfiles(
            serial_out,
            parallel_out,
            ["conj.mse.jsonl", "disj.mse.jsonl", "addi.mse.jsonl", "mse_stats.csv"],
            shallow=False,
        )
        assert not mismatch and not errors

    def test_seed_flag_changes_randomized_maps(self, tmp_path):
        cfg = _base_config(tmp_path / "out-a")
        config = _write_config(tmp_path, cfg)
        assert main(["saliency", "--config", config, "--seed", "1"]) == 0
        map_a = (tmp_path / "out-a" / "maps" / "addi" / "synth-0000.fmap").read_bytes()
        assert (
            main(
                ["saliency", "--config", config, "--seed", "2", "--out", str(tmp_path / "out-b")]
            )
            == 0
        )
        map_b = (tmp_path / "out-b" / "maps" / "addi" / "synth-0000.fmap").read_bytes()
        assert map_a != map_b

    def test_out_flag_overrides_config(self, tmp_path):
        config = _write_config(tmp_path, _base_config(tmp_path / "ignored"))
        override = tmp_path / "chosen"
        assert main(["mse", "--config", config, "--out", str(override)]) == 0
        assert (override / "mse_stats.csv").exists()
        assert not (tmp_path / "ignored").exists()


class TestCachePersistence:
    def test_cache_file_written_and_reused(self, tmp_path, monkeypatch):
        cache_dir = tmp_path / "cache"
        monkeypatch.setenv("XPROBE_CACHE_DIR", str(cache_dir))
        out = tmp_path / "out"
        config = _write_config(tmp_path, _base_config(out))
        assert main(["mse", "--config", config]) == 0
        cache_file = cache_dir / "confidences.jsonl"
        assert cache_file.exists()
        entry = json.loads(cache_file.read_text().splitlines()[0])
        assert set(entry) == {"model", "image", "baseline", "token", "class", "confidence"}
        first = _tree_bytes(out)
        assert main(["mse", "--config", config]) == 0
        assert _tree_bytes(out) == first

    def test_blur_baseline_runs(self, tmp_path):
        out = tmp_path / "out"
        cfg = _base_config(out, baseline={"kind": "blur", "blur_sigma": 2.0})
        cfg["models"] = cfg["models"][:1]
        config = _write_config(tmp_path, cfg)
        assert main(["mse", "--config", config]) == 0
        assert (out / "conj.mse.jsonl").exists()
