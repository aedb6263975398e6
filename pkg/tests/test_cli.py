import copy
import json
import subprocess
import sys

import pytest

from leakaudit import cli, datasets

BASE = {
    "seed": 3,
    "dataset": {"synthetic": {"n_per_class": 30, "n_features": 3, "num_classes": 2,
                              "class_separation": 1.0}},
    "split": {"n_members": 15, "n_nonmembers": 15},
    "target": {"hidden_layers": [8], "train": {"learning_rate": 0.1, "epochs": 40, "batch_size": 5}},
    "attacks": {"population_loss": True},
    "output_dir": "out",
}

SHADOW = {"n_shadows": 2, "shadow_train_fraction": 0.5,
          "attack_train": {"learning_rate": 0.1, "epochs": 20, "batch_size": 16}}


def write_config(tmp_path, cfg, name="audit.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def with_changes(**changes):
    cfg = copy.deepcopy(BASE)
    cfg.update(changes)
    return cfg


def run(argv, capsys):
    code = cli.main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestAudit:
    def test_population_loss_only(self, tmp_path, capsys):
        code, out, err = run(["audit", "--config", write_config(tmp_path, BASE)], capsys)
        assert code == 0, err
        assert (tmp_path / "out" / "report.json").is_file()
        assert (tmp_path / "out" / "target_model.json").is_file()
        assert "auc population_loss=" in out
        assert "loss_gap=" in out
        assert str(tmp_path / "out" / "report.json") in out

    def test_all_attacks_and_dp_target(self, tmp_path, capsys):
        cfg = with_changes(
            attacks={"population_loss": True, "shadow_blackbox": True, "shadow_whitebox": True},
            shadow=SHADOW,
            threads=2,
        )
        cfg["target"]["train"]["dp"] = {"clip_norm": 1.0, "noise_multiplier": 1.0}
        code, out, err = run(["audit", "--config", write_config(tmp_path, cfg)], capsys)
        assert code == 0, err
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert [b["attack_name"] for b in report["attacks"]] == [
            "population_loss", "shadow_blackbox", "shadow_whitebox"]
        assert report["epsilon"]["method"] == "zcdp-no-subsampling"
        assert "epsilon=" in out

    def test_deterministic(self, tmp_path, capsys):
        path = write_config(tmp_path, with_changes(shadow=SHADOW, attacks={
            "population_loss": True, "shadow_blackbox": True}))
        assert run(["audit", "--config", path, "--out", "a"], capsys)[0] == 0
        assert run(["audit", "--config", path, "--out", "b"], capsys)[0] == 0
        for name in ("roc_shadow_blackbox.csv", "risks_population_loss.csv", "target_model.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        ra = json.loads((tmp_path / "a" / "report.json").read_text())
        rb = json.loads((tmp_path / "b" / "report.json").read_text())
        ra["meta"].pop("timestamp"), rb["meta"].pop("timestamp")
        assert ra == rb

    def test_seed_override(self, tmp_path, capsys):
        path = write_config(tmp_path, BASE)
        run(["audit", "--config", path, "--out", "a"], capsys)
        run(["audit", "--config", path, "--out", "b", "--seed", "4"], capsys)
        ra = json.loads((tmp_path / "a" / "report.json").read_text())
        rb = json.loads((tmp_path / "b" / "report.json").read_text())
        assert ra["meta"]["config"]["seed"] == 3 and rb["meta"]["config"]["seed"] == 4
        assert ra["attacks"][0]["records"] != rb["attacks"][0]["records"]

    def test_csv_dataset(self, tmp_path, capsys):
        ds = datasets.generate_synthetic(20, 2, 2, 2.0, 0)
        datasets.write_csv(ds, tmp_path / "data.csv", label_column="y")
        cfg = with_changes(dataset={"csv": {"path": "data.csv", "label_column": "y"}})
        cfg["target"]["hidden_layers"] = []
        code, _, err = run(["audit", "--config", write_config(tmp_path, cfg)], capsys)
        assert code == 0, err


class TestErrors:
    def test_zero_attacks(self, tmp_path, capsys):
        cfg = with_changes(attacks={"population_loss": False})
        code, _, err = run(["audit", "--config", write_config(tmp_path, cfg)], capsys)
        assert code == 2
        assert err.startswith("error:config:")

    def test_missing_csv(self, tmp_path, capsys):
        cfg = with_changes(dataset={"csv": {"path": "nowhere.csv", "label_column": "y"}})
        code, _, err = run(["validate", "--config", write_config(tmp_path, cfg)], capsys)
        assert code == 2
        assert err.startswith("error:config:")
        assert str(tmp_path / "nowhere.csv") in err

    @pytest.mark.parametrize(
        "changes",
        [
            {"split": {"n_members": 0, "n_nonmembers": 5}},
            {"bogus": 1},
            {"attacks": {"shadow_blackbox": True}},
            {"metrics": {"bins": 0}},
            {"threads": 0},
            {"sweep": {"sigmas": [2.0, 1.0]}},
            {"seed": -1},
        ],
        ids=["split", "unknown-key", "shadow-missing", "bins", "threads", "sigmas", "seed"],
    )
    def test_invalid_configs(self, tmp_path, capsys, changes):
        code, _, err = run(["validate", "--config", write_config(tmp_path, with_changes(**changes))],
                           capsys)
        assert code == 2
        assert err.startswith("error:config:")
        assert len(err.strip().splitlines()) == 1

    def test_malformed_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{")
        code, _, err = run(["audit", "--config", str(path)], capsys)
        assert code == 2 and err.startswith("error:config:")

    def test_missing_config(self, tmp_path, capsys):
        code, _, err = run(["audit", "--config", str(tmp_path / "none.json")], capsys)
        assert code == 2 and err.startswith("error:config:")

    def test_runtime_error_exit_1(self, tmp_path, capsys):
        # More records requested than the dataset holds: valid config, fails at run time.
        cfg = with_changes(split={"n_members": 50, "n_nonmembers": 50})
        code, _, err = run(["audit", "--config", write_config(tmp_path, cfg)], capsys)
        assert code == 1
        assert err.startswith("error:") and not err.startswith("error:config:")

    def test_unwritable_output(self, tmp_path, capsys):
        (tmp_path / "out").write_text("")
        code, _, err = run(["audit", "--config", write_config(tmp_path, BASE)], capsys)
        assert code == 1
        assert err.startswith("error:io:")

    def test_bad_subcommand(self, capsys):
        assert cli.main(["explode"]) == 2


class TestValidate:
    def test_ok(self, tmp_path, capsys):
        code, out, _ = run(["validate", "--config", write_config(tmp_path, BASE)], capsys)
        assert code == 0 and out.startswith("ok:")
        assert not (tmp_path / "out").exists()

    def test_shipped_config(self, capsys):
        code, _, err = run(["validate", "--config", "configs/synthetic_audit.json"], capsys)
        assert code == 0, err


class TestSweep:
    def test_sweep_csv(self, tmp_path, capsys):
        cfg = with_changes(sweep={"sigmas": [0.5, 1, 2]})
        code, out, err = run(["sweep", "--config", write_config(tmp_path, cfg)], capsys)
        assert code == 0, err
        lines = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
        assert lines[0] == "sigma,epsilon,test_accuracy,auc_population_loss,loss_gap"
        assert len(lines) == 4
        eps = [float(line.split(",")[1]) for line in lines[1:]]
        assert eps[0] > eps[1] > eps[2]
        assert "sigma\tepsilon" in out

    def test_sigmas_absent(self, tmp_path, capsys):
        code, _, err = run(["sweep", "--config", write_config(tmp_path, BASE)], capsys)
        assert code == 2 and err.startswith("error:config:")


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "leakaudit", "validate", "--config", write_config(tmp_path, BASE)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and proc.stdout.startswith("ok:")
