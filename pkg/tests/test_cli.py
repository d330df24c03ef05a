import json

import numpy as np
import pytest
import yaml

from nadj.cli import build_parser, load_config, main
from nadj.errors import ValidationError

FAST_LENS = ["--task", "lens2d", "--set", "wavelengths=[16.0]"]


def run(argv):
    return main(argv)


def dir_bytes(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir()) if p.is_file()}


class TestConfig:
    def test_defaults_load_for_every_task(self):
        for task in ("router2d", "lens2d", "modeconv2d"):
            cfg = load_config(task, None, [])
            assert cfg["task"] == task
            assert "pml" in cfg and "model" in cfg

    def test_unknown_key_rejected(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump({"task": "lens2d", "wibble": 3}))
        with pytest.raises(ValidationError, match="unknown config key: wibble"):
            load_config(None, str(bad), [])

    def test_unknown_nested_key_rejected(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump({"task": "lens2d", "model": {"depth": 3}}))
        with pytest.raises(ValidationError, match="model.depth"):
            load_config(None, str(bad), [])

    def test_set_overrides_and_validates(self):
        cfg = load_config("lens2d", None, ["model.width=24", "wavelengths=[10.0, 14.0]"])
        assert cfg["model"]["width"] == 24
        assert cfg["wavelengths"] == [10.0, 14.0]
        with pytest.raises(ValidationError, match="unknown config key"):
            load_config("lens2d", None, ["model.nope=1"])

    def test_file_values_merge_with_flag_override(self, tmp_path):
        f = tmp_path / "cfg.yaml"
        f.write_text(yaml.safe_dump({"task": "lens2d", "seed": 7,
                                     "training": {"lr": 0.01}}))
        cfg = load_config(None, str(f), [])
        assert cfg["seed"] == 7
        assert cfg["training"]["lr"] == 0.01
        assert cfg["training"]["batch_size"] == 16  # default preserved


class TestGenData:
    def test_count_zero_exits_one_naming_invariant(self, tmp_path, capsys):
        code = run(["gen-data", *FAST_LENS, "--count", "0",
                    "--out", str(tmp_path / "d")])
        assert code == 1
        assert "count must be >= 1" in capsys.readouterr().err

    def test_generates_records_manifest_and_split(self, tmp_path):
        out = tmp_path / "d"
        assert run(["gen-data", *FAST_LENS, "--count", "10", "--seed", "42",
                    "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["count"] == 10
        assert len(manifest["splits"]["train"]) == 8
        assert (out / "design_00000.nadj").exists()
        assert (out / "grad_00009.nadj").exists()

    def test_rerun_byte_identical(self, tmp_path):
        args = ["gen-data", *FAST_LENS, "--count", "6", "--seed", "11"]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run([*args, "--out", str(out_a)]) == 0
        assert run([*args, "--out", str(out_b)]) == 0
        assert dir_bytes(out_a) == dir_bytes(out_b)


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "dataset"
    assert run(["gen-data", *FAST_LENS, "--count", "14", "--seed", "5",
                "--out", str(out)]) == 0
    return out


class TestTrain:
    def test_train_writes_checkpoint_and_report(self, cli_dataset, tmp_path):
        out = tmp_path / "ckpt"
        code = run(["train", *FAST_LENS, "--dataset", str(cli_dataset),
                    "--stages", "2", "--width", "6", "--epochs", "2",
                    "--seed", "3", "--out", str(out),
                    "--set", "model.mode_budgets=[4, 8]"])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["completed_stages"] == 2
        report = (out / "training_report.csv").read_text().splitlines()
        assert report[0] == "stage,epoch,train_loss,val_rel_l2,val_cosine"
        assert len(report) == 1 + 2 * 2

    def test_rerun_checkpoint_byte_identical(self, cli_dataset, tmp_path):
        args = ["train", *FAST_LENS, "--dataset", str(cli_dataset), "--stages", "1",
                "--width", "4", "--epochs", "2", "--seed", "3",
                "--set", "model.mode_budgets=[4]"]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run([*args, "--out", str(out_a)]) == 0
        assert run([*args, "--out", str(out_b)]) == 0
        assert dir_bytes(out_a) == dir_bytes(out_b)

    def test_nan_training_exits_three(self, cli_dataset, tmp_path, capsys):
        code = run(["train", *FAST_LENS, "--dataset", str(cli_dataset),
                    "--stages", "1", "--width", "4", "--epochs", "3",
                    "--out", str(tmp_path / "c"),
                    "--set", "model.mode_budgets=[4]",
                    "--set", "training.lr=1.0e+30"])
        assert code == 3
        err = capsys.readouterr().err
        assert "stage 1" in err


class TestOptimize:
    def test_missing_model_path_exits_one(self, tmp_path, capsys):
        code = run(["optimize", *FAST_LENS, "--mode", "surrogate",
                    "--model", str(tmp_path / "absent"), "--iters", "1",
                    "--out", str(tmp_path / "o")])
        assert code == 1
        assert "missing model checkpoint" in capsys.readouterr().err

    def test_solver_mode_outputs_and_determinism(self, tmp_path):
        args = ["optimize", *FAST_LENS, "--mode", "solver", "--iters", "2",
                "--seed", "9", "--init", "random"]
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run([*args, "--out", str(out_a)]) == 0
        assert run([*args, "--out", str(out_b)]) == 0
        assert (out_a / "trace_solver.csv").read_bytes() == \
               (out_b / "trace_solver.csv").read_bytes()
        assert (out_a / "design_solver.nadj").read_bytes() == \
               (out_b / "design_solver.nadj").read_bytes()
        assert (out_a / "design_solver.png").exists()
        assert (out_a / "field_solver_lam16.png.txt").exists()

    def test_both_mode_emits_comparison(self, cli_dataset, tmp_path):
        ckpt = tmp_path / "ckpt"
        assert run(["train", *FAST_LENS, "--dataset", str(cli_dataset), "--stages", "1",
                    "--width", "4", "--epochs", "1", "--seed", "3",
                    "--out", str(ckpt), "--set", "model.mode_budgets=[4]"]) == 0
        out = tmp_path / "cmp"
        assert run(["optimize", *FAST_LENS, "--mode", "both", "--model", str(ckpt),
                    "--iters", "3", "--seed", "4", "--out", str(out)]) == 0
        summary = json.loads((out / "comparison.json").read_text())
        assert {"rel_opt_fom", "speedup", "structure_cosine"} <= set(summary)
        assert (out / "wallclock_vs_iteration.csv").exists()


class TestGenDataFailures:
    def test_failure_rate_above_threshold_exits_two(self, tmp_path, monkeypatch, capsys):
        import nadj.datagen as datagen_mod
        from nadj.errors import SolverError

        real = datagen_mod.compute_adjoint_gradient
        calls = {"n": 0}

        def flaky(design, fom, src, pml):
            calls["n"] += 1
            if calls["n"] % 2 == 0:
                raise SolverError("synthetic non-convergence", residual=1.0)
            return real(design, fom, src, pml)

        monkeypatch.setattr(datagen_mod, "compute_adjoint_gradient", flaky)
        code = run(["gen-data", *FAST_LENS, "--count", "8", "--seed", "2",
                    "--out", str(tmp_path / "d")])
        assert code == 2
        assert "failed labeling" in capsys.readouterr().err


class TestCheckGrad:
    def test_check_grad_passes(self, capsys):
        code = run(["check-grad", *FAST_LENS, "--cells", "4", "--seed", "1"])
        assert code == 0
        out = capsys.readouterr().out
        assert "PASS" in out
        assert "cosine similarity" in out

    def test_under_resolved_wavelength_fails_before_solving(self, capsys):
        code = run(["check-grad", "--task", "lens2d", "--set", "wavelengths=[1.0]",
                    "--cells", "2"])
        assert code == 1
        assert "under-resolved" in capsys.readouterr().err


class TestParser:
    def test_help_lists_every_subcommand_flag(self):
        parser = build_parser()
        for cmd, flags in {
            "gen-data": ["--task", "--config", "--seed", "--set", "--count", "--out"],
            "train": ["--dataset", "--stages", "--width", "--epochs", "--resume", "--out"],
            "optimize": ["--model", "--mode", "--iters", "--init", "--out"],
            "check-grad": ["--cells"],
        }.items():
            sub = next(a for a in parser._subparsers._group_actions[0].choices.items()
                       if a[0] == cmd)[1]
            text = sub.format_help()
            for flag in flags:
                assert flag in text, f"{cmd} missing {flag}"
