import csv
import json

import pytest

from scenemem.cli import main

SMALL = ["--envs", "2", "--steps", "3"]


def only_run(root, cmd):
    (d,) = list(root.glob(f"{cmd}-*"))
    return d


class TestEval:
    def test_happy_path(self, tmp_path, capsys):
        rc = main(["eval", "--task", "predict-location", "--policy", "bayesian", "--seed", "7",
                   "--out", str(tmp_path), *SMALL])
        assert rc == 0
        d = only_run(tmp_path, "eval")
        rows = [r for r in csv.DictReader((d / "metrics.csv").open()) if r["step"].isdigit()]
        assert len(rows) == 3 and all(0.0 <= float(r["mean"]) <= 1.0 for r in rows)
        manifest = json.loads((d / "manifest.json").read_text())
        assert manifest["command"] == "eval" and manifest["seed"] == 7
        assert manifest["config"]["task"] == "predict_location"
        assert "mean=" in capsys.readouterr().out

    def test_manifest_replay_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["eval", "--policy", "frequentist", "--seed", "3", "--out", str(a), *SMALL]) == 0
        manifest = only_run(a, "eval") / "manifest.json"
        assert main(["eval", "--config", str(manifest), "--out", str(b)]) == 0
        assert (only_run(a, "eval") / "metrics.csv").read_bytes() == (only_run(b, "eval") / "metrics.csv").read_bytes()

    def test_flag_overrides_config(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"policy": "random", "envs": 2, "steps": 2, "seed": 1}))
        assert main(["eval", "--config", str(cfg), "--policy", "priors", "--out", str(tmp_path / "o")]) == 0
        manifest = json.loads((only_run(tmp_path / "o", "eval") / "manifest.json").read_text())
        assert manifest["config"]["policy"] == "priors" and manifest["config"]["envs"] == 2

    def test_env_var_output_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SCENEMEM_OUT", str(tmp_path / "env-root"))
        assert main(["eval", "--policy", "random", "--seed", "1", *SMALL]) == 0
        assert only_run(tmp_path / "env-root", "eval").is_dir()


class TestErrors:
    def test_unknown_flag(self, capsys):
        assert main(["eval", "--bogus"]) == 2
        assert "usage" in capsys.readouterr().err

    def test_missing_seed(self, tmp_path, capsys):
        assert main(["eval", "--out", str(tmp_path)]) == 2
        assert "seed" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 1, "colour": "blue"}))
        assert main(["eval", "--config", str(cfg), "--out", str(tmp_path)]) == 2

    def test_missing_dataset(self, tmp_path, capsys):
        missing = tmp_path / "nope.jsonl.gz"
        assert main(["train", "--dataset", str(missing), "--seed", "0", "--out", str(tmp_path / "o")]) == 1
        err = capsys.readouterr().err
        assert err.startswith("scenemem: error:") and "nope.jsonl.gz" in err
        assert not list((tmp_path / "o").glob("train-*"))


class TestCommands:
    def test_sample_env_counts(self, tmp_path, capsys):
        assert main(["sample-env", "--seed", "2", "--out", str(tmp_path)]) == 0
        assert "rooms=4 furniture=32 objects=192" in capsys.readouterr().out
        assert (only_run(tmp_path, "sample-env") / "env.json").is_file()

    def test_evolve_from_snapshot(self, tmp_path):
        assert main(["sample-env", "--seed", "2", "--out", str(tmp_path)]) == 0
        snap = only_run(tmp_path, "sample-env") / "env.json"
        assert main(["evolve", "--snapshot", str(snap), "--steps", "3", "--out", str(tmp_path)]) == 0
        d = only_run(tmp_path, "evolve")
        assert len((d / "trace.csv").read_text().splitlines()) == 4

    def test_collect_train_nep_eval(self, tmp_path):
        out = str(tmp_path)
        assert main(["collect", "--seed", "1", "--envs", "2", "--steps", "2", "--out", out]) == 0
        data = only_run(tmp_path, "collect") / "dataset.jsonl.gz"
        assert main(["train", "--dataset", str(data), "--seed", "1", "--epochs", "1", "--hidden", "8",
                     "--out", out]) == 0
        ckpt = only_run(tmp_path, "train") / "checkpoint.npz"
        assert main(["eval", "--policy", "nep", "--checkpoint", str(ckpt), "--seed", "5", "--out", out,
                     *SMALL]) == 0

    def test_igridson(self, tmp_path):
        assert main(["igridson", "--seed", "0", "--envs", "1", "--episodes", "3", "--out", str(tmp_path)]) == 0
        d = only_run(tmp_path, "igridson")
        summary = json.loads((d / "summary.json").read_text())
        assert 0.0 <= summary["success_rate"] <= 1.0
        assert (d / "house.ppm").read_bytes().startswith(b"P6")

    def test_selftest(self, tmp_path, capsys):
        assert main(["selftest", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out and out.count("PASS") == 6
