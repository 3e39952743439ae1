"""CLI surface: subcommands, config merging, exit codes, artifacts."""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from sotm.cli import main, read_config_file

from conftest import write_cube_csv


@pytest.fixture
def data_csv(tmp_path, rng):
    return write_cube_csv(tmp_path / "data.csv", rng, n_slices=3, n_entities=10, d=3)


def run(*argv):
    return main([str(a) for a in argv])


class TestTrain:
    def test_writes_model_and_metrics(self, tmp_path, data_csv):
        out = tmp_path / "run"
        assert run("train", "--input", data_csv, "--units", 4, "--steps", 5,
                   "--sigma", "1.0", "--out", out) == 0
        doc = json.loads((out / "model.json").read_text())
        assert doc["T"] == 3
        assert doc["M"] == 4
        metrics = (out / "metrics.csv").read_text().strip().split("\n")
        assert metrics[0] == "time_key,n,sigma,qe,dm,te,kl,sc"
        assert len(metrics) == 1 + 3 + 1
        assert (out / "metrics.svg").exists()
        assert (out / "effective_config.txt").exists()

    def test_missing_input_names_the_path(self, tmp_path, capsys):
        code = run("train", "--input", tmp_path / "nope.csv", "--out", tmp_path / "o")
        assert code == 1
        assert "nope.csv" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_rerun_is_byte_identical(self, tmp_path, data_csv):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("train", "--input", data_csv, "--units", 4,
                       "--steps", 5, "--sigma", "1.0", "--out", out) == 0
        for name in ("model.json", "metrics.csv", "metrics.svg"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_default_sigma_recorded_in_effective_config(self, tmp_path, data_csv):
        out = tmp_path / "run"
        assert run("train", "--input", data_csv, "--units", 8, "--out", out) == 0
        config = read_config_file(out / "effective_config.txt")
        assert config["sigma"] == 2.0  # units / 4

    def test_bad_csv_exits_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("entity,time,f1\na,1,oops\n")
        assert run("train", "--input", bad, "--out", tmp_path / "o") == 1
        assert "line 2" in capsys.readouterr().err


class TestTune:
    def test_single_candidate_grid_matches_train(self, tmp_path, data_csv):
        t_out, u_out = tmp_path / "fixed", tmp_path / "tuned"
        assert run("train", "--input", data_csv, "--units", 4, "--steps", 5,
                   "--sigma", "1.25", "--out", t_out) == 0
        assert run("tune", "--input", data_csv, "--units", 4, "--steps", 5,
                   "--grid", "1.25", "--out", u_out) == 0
        assert (t_out / "model.json").read_bytes() == (u_out / "model.json").read_bytes()
        assert (t_out / "metrics.csv").read_bytes() == (u_out / "metrics.csv").read_bytes()

    def test_writes_tune_report(self, tmp_path, data_csv):
        out = tmp_path / "run"
        assert run("tune", "--input", data_csv, "--units", 4, "--steps", 4,
                   "--grid", "0.5,1.0,2.0", "--out", out) == 0
        doc = json.loads((out / "tune.json").read_text())
        assert len(doc["per_slice"]) == 3
        for row in doc["per_slice"]:
            assert len(row["kl_by_candidate"]) == 3

    def test_verify_passes_on_honest_run(self, tmp_path, data_csv, capsys):
        out = tmp_path / "run"
        assert run("tune", "--input", data_csv, "--units", 4, "--steps", 4,
                   "--grid", "0.5,1.5", "--out", out, "--verify") == 0
        assert "grid minimum" in capsys.readouterr().out

    def test_invalid_grid_exits_one(self, tmp_path, data_csv, capsys):
        assert run("tune", "--input", data_csv, "--grid=-0.5,1.0",
                   "--out", tmp_path / "o") == 1
        assert "positive" in capsys.readouterr().err

    def test_non_numeric_grid_exits_one(self, tmp_path, data_csv):
        assert run("tune", "--input", data_csv, "--grid", "a,b",
                   "--out", tmp_path / "o") == 1

    def test_verify_failure_exits_two(self, tmp_path, data_csv, monkeypatch):
        import sotm.cli as cli_mod

        monkeypatch.setattr(
            cli_mod, "verify_tuning", lambda *a, **k: ["slice 1: fabricated problem"]
        )
        assert run("tune", "--input", data_csv, "--units", 4, "--steps", 3,
                   "--grid", "0.5,1.5", "--out", tmp_path / "o", "--verify") == 2


class TestMetrics:
    def test_recomputes_from_model_and_data(self, tmp_path, data_csv):
        run_dir = tmp_path / "run"
        assert run("train", "--input", data_csv, "--units", 4, "--steps", 5,
                   "--sigma", "1.0", "--out", run_dir) == 0
        again = tmp_path / "again"
        assert run("metrics", "--model", run_dir / "model.json",
                   "--input", data_csv, "--out", again) == 0
        assert (again / "metrics.csv").read_bytes() == (run_dir / "metrics.csv").read_bytes()
        assert (again / "metrics.svg").exists()


class TestRender:
    @pytest.fixture
    def model_path(self, tmp_path, rng):
        csv = write_cube_csv(tmp_path / "d.csv", rng, n_slices=9, n_entities=12, d=3)
        out = tmp_path / "run"
        assert run("train", "--input", csv, "--units", 7, "--steps", 4,
                   "--sigma", "1.0", "--out", out) == 0
        return out / "model.json"

    def test_map_has_slice_columns_and_unit_rows(self, tmp_path, model_path):
        out = tmp_path / "map.svg"
        assert run("render", "--model", model_path, "map", "--out", out) == 0
        root = ET.fromstring(out.read_text())
        cells = [el for el in root.iter() if el.get("class") == "cell"]
        assert len(cells) == 9 * 7
        assert len({c.get("x") for c in cells}) == 9
        assert len({c.get("y") for c in cells}) == 7

    def test_plane_uses_one_based_index(self, tmp_path, model_path):
        out = tmp_path / "plane3.svg"
        assert run("render", "--model", model_path, "plane", 3, "--out", out) == 0
        root = ET.fromstring(out.read_text())
        titles = [el.text for el in root.iter() if el.get("class") == "title"]
        assert titles == ["f3"]

    def test_plane_index_out_of_range(self, tmp_path, model_path, capsys):
        assert run("render", "--model", model_path, "plane", 99,
                   "--out", tmp_path / "x.svg") == 1
        assert "out of range" in capsys.readouterr().err

    def test_plane_requires_index(self, tmp_path, model_path):
        assert run("render", "--model", model_path, "plane",
                   "--out", tmp_path / "x.svg") == 1

    def test_topology_csv(self, tmp_path, model_path):
        out = tmp_path / "topo.csv"
        assert run("render", "--model", model_path, "topology", "--out", out) == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "time_key,unit,x,y"
        assert len(lines) == 1 + 9 * 7

    def test_corrupt_model_names_violation(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"version":1,"M":2}')
        assert run("render", "--model", bad, "map", "--out", tmp_path / "m.svg") == 1
        assert "missing key" in capsys.readouterr().err

    def test_render_repeats_identically(self, tmp_path, model_path):
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        assert run("render", "--model", model_path, "map", "--out", a) == 0
        assert run("render", "--model", model_path, "map", "--out", b) == 0
        assert a.read_bytes() == b.read_bytes()


class TestConfigHandling:
    def test_config_file_supplies_defaults(self, tmp_path, data_csv):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"input = {data_csv}\nunits = 5\nsteps = 4\nsigma = 0.9\n"
            "normalize = full  # scale to percentiles\n"
        )
        out = tmp_path / "run"
        assert run("train", "--config", cfg, "--out", out) == 0
        assert json.loads((out / "model.json").read_text())["M"] == 5

    def test_flags_override_config_file(self, tmp_path, data_csv):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"input = {data_csv}\nunits = 5\nsigma = 0.9\n")
        out = tmp_path / "run"
        assert run("train", "--config", cfg, "--units", 3, "--out", out) == 0
        assert json.loads((out / "model.json").read_text())["M"] == 3
        assert read_config_file(out / "effective_config.txt")["units"] == 3

    def test_unknown_config_key_exits_one(self, tmp_path, data_csv, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("volume = 11\n")
        assert run("train", "--config", cfg, "--input", data_csv,
                   "--out", tmp_path / "o") == 1
        assert "unknown key" in capsys.readouterr().err

    def test_env_var_overrides_seed(self, tmp_path, data_csv, monkeypatch):
        monkeypatch.setenv("SOTM_SEED", "99")
        out = tmp_path / "run"
        assert run("train", "--input", data_csv, "--units", 3, "--sigma", "1.0",
                   "--seed", "5", "--out", out) == 0
        assert read_config_file(out / "effective_config.txt")["seed"] == 99

    def test_invalid_env_seed_exits_one(self, tmp_path, data_csv, monkeypatch):
        monkeypatch.setenv("SOTM_SEED", "not-a-number")
        assert run("train", "--input", data_csv, "--out", tmp_path / "o") == 1

    def test_normalize_flag_changes_training(self, tmp_path, data_csv):
        raw, scaled = tmp_path / "raw", tmp_path / "scaled"
        assert run("train", "--input", data_csv, "--sigma", "1.0", "--out", raw) == 0
        assert run("train", "--input", data_csv, "--sigma", "1.0",
                   "--normalize", "full", "--out", scaled) == 0
        assert (raw / "model.json").read_bytes() != (scaled / "model.json").read_bytes()
