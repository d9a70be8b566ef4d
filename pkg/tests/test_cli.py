import json
import subprocess
import sys

import numpy as np
import pytest

from fairspec import cli
from fairspec.data import load_blobs_csv


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    return str(path)


def blobs_section(counts=(20, 20, 12), d=4, d_y=3):
    return {
        "kind": "blobs",
        "d": d,
        "d_y": d_y,
        "counts": list(counts),
        "centers_scale": 5.0,
        "noise_std": 0.9,
        "seed": 77,
    }


def small_train_config(tmp_path, out_name="run", alpha=0.3, seed=5):
    return {
        "seed": seed,
        "out": str(tmp_path / out_name),
        "data": blobs_section(),
        "net": {"hidden": [8]},
        "attack": {
            "norm": "linf",
            "epsilon": 0.05,
            "step_size": 0.02,
            "iters": 3,
            "random_start": True,
        },
        "reg": {"alpha": alpha, "gamma": 0.1, "mode": "hybrid"},
        "train": {
            "epochs": 2,
            "batch_size": 16,
            "lr": 0.05,
            "momentum": 0.9,
            "weight_decay": 0.0001,
            "lr_drops": [],
        },
        "bound": {"gamma": 0.2, "delta": 0.05},
    }


class TestValidation:
    def test_missing_config_file(self, tmp_path, capsys):
        assert cli.main(["train", "--config", str(tmp_path / "nope.json")]) == 2

    def test_missing_required_key_names_it(self, tmp_path, capsys):
        config = small_train_config(tmp_path)
        del config["net"]
        path = write_config(tmp_path, "cfg.json", config)
        assert cli.main(["train", "--config", path]) == 2
        assert "net" in capsys.readouterr().err

    def test_unknown_key_names_it(self, tmp_path, capsys):
        config = small_train_config(tmp_path)
        config["reg"]["alhpa"] = 0.5
        path = write_config(tmp_path, "cfg.json", config)
        assert cli.main(["train", "--config", path]) == 2
        assert "alhpa" in capsys.readouterr().err

    def test_wrong_type_rejected(self, tmp_path, capsys):
        config = small_train_config(tmp_path)
        config["train"]["epochs"] = "two"
        path = write_config(tmp_path, "cfg.json", config)
        assert cli.main(["train", "--config", path]) == 2
        assert "epochs" in capsys.readouterr().err

    def test_missing_out_rejected(self, tmp_path, capsys):
        config = small_train_config(tmp_path)
        del config["out"]
        path = write_config(tmp_path, "cfg.json", config)
        assert cli.main(["train", "--config", path]) == 2
        assert "out" in capsys.readouterr().err


class TestSynth:
    def test_writes_dataset_and_stats(self, tmp_path):
        config = {"seed": 3, "out": str(tmp_path / "synth"), "data": blobs_section()}
        path = write_config(tmp_path, "cfg.json", config)
        assert cli.main(["synth", "--config", path]) == 0
        ds, seed = load_blobs_csv(tmp_path / "synth" / "dataset.csv")
        assert ds.m == 52
        assert seed == 77
        stats = json.loads((tmp_path / "synth" / "stats.json").read_text())
        assert stats["counts"] == [20, 20, 12]
        assert stats["m_min"] == 12
        assert stats["config"]["command"] == "synth"

    def test_seed_flag_overrides(self, tmp_path):
        section = blobs_section()
        del section["seed"]
        config = {"seed": 1, "out": str(tmp_path / "a"), "data": section}
        path = write_config(tmp_path, "cfg.json", config)
        assert cli.main(["synth", "--config", path, "--seed", "9"]) == 0
        resolved = json.loads((tmp_path / "a" / "resolved_config.json").read_text())
        assert resolved["config"]["seed"] == 9
        assert resolved["config"]["data"]["seed"] == 9


class TestTrain:
    def test_artifacts_exist(self, tmp_path):
        path = write_config(tmp_path, "cfg.json", small_train_config(tmp_path))
        assert cli.main(["train", "--config", path]) == 0
        out = tmp_path / "run"
        for name in (
            "checkpoint.bin",
            "history.csv",
            "report_per_class.csv",
            "report_summary.csv",
            "bound.json",
            "resolved_config.json",
            "run.log",
        ):
            assert (out / name).exists(), name

    def test_byte_identical_reruns(self, tmp_path):
        cfg_a = small_train_config(tmp_path, out_name="run_a")
        cfg_b = small_train_config(tmp_path, out_name="run_b")
        path_a = write_config(tmp_path, "a.json", cfg_a)
        path_b = write_config(tmp_path, "b.json", cfg_b)
        assert cli.main(["train", "--config", path_a]) == 0
        assert cli.main(["train", "--config", path_b]) == 0
        for name in ("checkpoint.bin", "history.csv", "report_per_class.csv",
                     "report_summary.csv"):
            a = (tmp_path / "run_a" / name).read_bytes()
            b = (tmp_path / "run_b" / name).read_bytes()
            assert a == b, name

    def test_bound_json_feasible_here(self, tmp_path):
        # counts (20, 20, 12): m_min=12 <= 8*3, so the bound must report
        # infeasibility rather than fail the run
        path = write_config(tmp_path, "cfg.json", small_train_config(tmp_path, out_name="r1"))
        assert cli.main(["train", "--config", path]) == 0
        payload = json.loads((tmp_path / "r1" / "bound.json").read_text())
        assert "infeasible" in payload
        # larger m_min produces a real report
        config = small_train_config(tmp_path, out_name="r2")
        config["data"]["counts"] = [40, 40, 40]
        path = write_config(tmp_path, "cfg2.json", config)
        assert cli.main(["train", "--config", path]) == 0
        payload = json.loads((tmp_path / "r2" / "bound.json").read_text())
        assert "report" in payload
        report = payload["report"]
        assert report["total"] == pytest.approx(
            report["spectral_term"] + report["complexity_term"]
        )
        assert payload["epsilon_info"]["converted_from_linf"] is True

    def test_history_has_config_comment(self, tmp_path):
        path = write_config(tmp_path, "cfg.json", small_train_config(tmp_path, out_name="r3"))
        assert cli.main(["train", "--config", path]) == 0
        first = (tmp_path / "r3" / "history.csv").read_text().splitlines()[0]
        assert first.startswith("# config=")
        embedded = json.loads(first[len("# config=") :])
        assert embedded["reg"]["alpha"] == 0.3


class TestFinetuneEvalBoundSharpness:
    @pytest.fixture()
    def trained_run(self, tmp_path):
        config = small_train_config(tmp_path, out_name="base")
        config["data"]["counts"] = [30, 30, 30]
        path = write_config(tmp_path, "base.json", config)
        assert cli.main(["train", "--config", path]) == 0
        return tmp_path, str(tmp_path / "base" / "checkpoint.bin")

    def test_finetune(self, trained_run):
        tmp_path, ckpt = trained_run
        config = {
            "seed": 11,
            "out": str(tmp_path / "ft"),
            "checkpoint": ckpt,
            "data": blobs_section((30, 30, 30)),
            "attack": {"norm": "linf", "epsilon": 0.05, "step_size": 0.02, "iters": 3},
            "reg": {"alpha": 0.3, "gamma": 0.0},
            "train": {"epochs": 1, "batch_size": 16},
        }
        path = write_config(tmp_path, "ft.json", config)
        assert cli.main(["finetune", "--config", path]) == 0
        resolved = json.loads((tmp_path / "ft" / "resolved_config.json").read_text())
        assert resolved["config"]["train"]["lr"] == 0.01  # fine-tuning default

    def test_eval_with_test_split(self, trained_run):
        tmp_path, ckpt = trained_run
        test_section = blobs_section((15, 15, 15))
        test_section["seed"] = 99
        config = {
            "seed": 12,
            "out": str(tmp_path / "ev"),
            "checkpoint": ckpt,
            "data": blobs_section((30, 30, 30)),
            "data_test": test_section,
            # strong attack so per-class accuracies spread out and the rank
            # correlation is well defined
            "attack": {"norm": "linf", "epsilon": 0.6, "step_size": 0.2, "iters": 5},
        }
        path = write_config(tmp_path, "ev.json", config)
        assert cli.main(["eval", "--config", path]) == 0
        summary = (tmp_path / "ev" / "report_summary.csv").read_text().splitlines()
        header = summary[1].split(",")
        row = summary[2].split(",")
        assert "kendall_train_test" in header
        value = row[header.index("kendall_train_test")]
        if value:  # undefined only when a split still has constant accuracies
            assert -1.0 <= float(value) <= 1.0
        assert row[header.index("cov_train_test")] != ""
        assert (tmp_path / "ev" / "report_per_class_test.csv").exists()

    def test_bound_command(self, trained_run):
        tmp_path, ckpt = trained_run
        config = {
            "seed": 13,
            "out": str(tmp_path / "bd"),
            "checkpoint": ckpt,
            "data": blobs_section((30, 30, 30)),
            "attack": {"norm": "linf", "epsilon": 0.05, "step_size": 0.02, "iters": 3},
            "bound": {"gamma": 0.2, "delta": 0.05, "convert_linf": False},
        }
        path = write_config(tmp_path, "bd.json", config)
        assert cli.main(["bound", "--config", path]) == 0
        payload = json.loads((tmp_path / "bd" / "bound.json").read_text())
        assert payload["epsilon_info"]["converted_from_linf"] is False
        assert "report" in payload

    def test_sharpness_command(self, trained_run):
        tmp_path, ckpt = trained_run
        config = {
            "seed": 14,
            "out": str(tmp_path / "sh"),
            "checkpoint": ckpt,
            "data": blobs_section((30, 30, 30)),
            "attack": {"norm": "linf", "epsilon": 0.05, "step_size": 0.02, "iters": 2},
            "sharpness": {
                "grid": [0.0001, 0.001],
                "n_samples": 3,
                "drop_threshold": 0.3,
                "accuracy": "clean",
            },
        }
        path = write_config(tmp_path, "sh.json", config)
        assert cli.main(["sharpness", "--config", path]) == 0
        payload = json.loads((tmp_path / "sh" / "sharpness.json").read_text())
        assert payload["grid"] == [0.0001, 0.001]
        assert payload["n_samples"] == 3


class TestNuStudy:
    def test_runs_and_reports(self, tmp_path):
        config = {
            "seed": 21,
            "out": str(tmp_path / "nu"),
            "nu": {"d_y": 6, "trials": 300},
        }
        path = write_config(tmp_path, "nu.json", config)
        assert cli.main(["nu-study", "--config", path]) == 0
        payload = json.loads((tmp_path / "nu" / "nu.json").read_text())
        assert payload["trials"] == 300
        assert payload["generator"] == "uniform"
        hist = (tmp_path / "nu" / "nu_hist.csv").read_text().splitlines()
        assert hist[1] == "bin_left,bin_right,count"

    def test_byte_identical_reruns(self, tmp_path):
        for name in ("x", "y"):
            config = {
                "seed": 22,
                "out": str(tmp_path / name),
                "nu": {"d_y": 5, "trials": 200},
            }
            path = write_config(tmp_path, f"{name}.json", config)
            assert cli.main(["nu-study", "--config", path]) == 0
        assert (tmp_path / "x" / "nu.json").read_bytes() == (
            tmp_path / "y" / "nu.json"
        ).read_bytes()
        assert (tmp_path / "x" / "nu_hist.csv").read_bytes() == (
            tmp_path / "y" / "nu_hist.csv"
        ).read_bytes()


def test_console_entry_point(tmp_path):
    config = {
        "seed": 30,
        "out": str(tmp_path / "cli_nu"),
        "nu": {"d_y": 4, "trials": 50},
    }
    path = write_config(tmp_path, "cfg.json", config)
    proc = subprocess.run(
        [sys.executable, "-m", "fairspec.cli", "nu-study", "--config", path],
        capture_output=True,
        text=True,
        env={"PATH": "/usr/bin:/bin", "FAIRSPEC_LOG": "error"},
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "cli_nu" / "nu.json").exists()
