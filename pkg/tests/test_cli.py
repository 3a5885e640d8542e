"""End-to-end CLI tests on tiny configurations."""

import json

from sspa.cli import main
from sspa.bundleio import read_bundle
from sspa.pgm import read_pgm

TINY = [
    "--set", "model.c=3",
    "--set", "model.m=4",
    "--set", "model.d=8",
    "--set", "model.l=2",
    "--set", "data.n_train=24",
    "--set", "data.n_test=12",
    "--set", "data.separation=0.8",
    "--set", "train.epochs=2",
    "--set", "train.batch=8",
]


def run(args):
    return main([str(a) for a in args])


class TestGenData:
    def test_writes_loadable_bundle_and_manifest(self, tmp_path):
        out = tmp_path / "gen"
        assert run(["gen-data", "--out", out, *TINY]) == 0
        bundle = read_bundle(out / "data.sspafb")
        assert (bundle.c, bundle.m, bundle.d, bundle.n) == (3, 4, 8, 36)
        assert bundle.t_ka is not None
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["categories"] == ["class_0", "class_1", "class_2"]
        assert (out / "resolved_config.json").exists()

    def test_idempotent_given_seed(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run(["gen-data", "--out", a, "--seed", 7, *TINY])
        run(["gen-data", "--out", b, "--seed", 7, *TINY])
        assert (a / "data.sspafb").read_bytes() == (b / "data.sspafb").read_bytes()


class TestTrainEval:
    def test_train_writes_artifacts(self, tmp_path):
        out = tmp_path / "run"
        assert run(["train", "--out", out, *TINY]) == 0
        assert (out / "params.npz").exists()
        metrics = json.loads((out / "metrics.json").read_text())
        assert 0.0 <= metrics["mAP"] <= 1.0
        header = (out / "history.csv").read_text().splitlines()[0].split(",")
        assert header[:4] == ["epoch", "lr", "train_loss", "mAP"]
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["model"]["c"] == 3

    def test_eval_matches_final_training_metrics(self, tmp_path):
        out = tmp_path / "run"
        run(["train", "--out", out, *TINY])
        ev = tmp_path / "eval"
        assert run(["eval", "--out", ev, "--params", out / "params.npz", *TINY]) == 0
        train_metrics = json.loads((out / "metrics.json").read_text())
        eval_metrics = json.loads((ev / "eval.json").read_text())
        assert eval_metrics["mAP"] == train_metrics["mAP"]
        assert (ev / "eval.txt").read_text().startswith("mAP:")

    def test_train_determinism_bitwise(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run(["train", "--out", a, "--seed", 3, *TINY])
        run(["train", "--out", b, "--seed", 3, *TINY])
        assert (a / "metrics.json").read_bytes() == (b / "metrics.json").read_bytes()
        assert (a / "history.csv").read_bytes() == (b / "history.csv").read_bytes()

    def test_train_on_bundle_file(self, tmp_path):
        gen = tmp_path / "gen"
        run(["gen-data", "--out", gen, *TINY])
        out = tmp_path / "run"
        code = run(
            ["train", "--out", out, *TINY, "--set", f'data.file="{gen / "data.sspafb"}"']
        )
        assert code == 0
        assert (out / "params.npz").exists()


class TestAblate:
    def test_synthesis_axis_table(self, tmp_path):
        out = tmp_path / "abl"
        args = ["ablate", "--axis", "synthesis", "--out", out, *TINY, "--set", "train.epochs=1"]
        assert run(args) == 0
        rows = (out / "ablation.csv").read_text().splitlines()
        assert rows[0] == "variant,mAP,CF1,OF1"
        assert [r.split(",")[0] for r in rows[1:]] == ["sum", "concat", "MLP", "QSM"]
        text = (out / "ablation.txt").read_text()
        assert text.startswith("axis: synthesis")


class TestGradCheck:
    def test_exit_zero_and_report(self, tmp_path, capsys):
        out = tmp_path / "gc"
        assert run(["grad-check", "--out", out]) == 0
        report = (out / "grad_check.txt").read_text()
        assert "cma" in report and "FAIL" not in report


class TestInspect:
    def test_writes_patch_grid_pgms(self, tmp_path):
        out = tmp_path / "run"
        run(["train", "--out", out, *TINY])
        ins = tmp_path / "inspect"
        code = run(
            ["inspect", "--out", ins, "--params", out / "params.npz", "--count", 2, *TINY]
        )
        assert code == 0
        gamma = read_pgm(ins / "gamma_img0_cat0.pgm")
        assert gamma.shape == (2, 2)  # m=4 patches -> 2x2 grid
        gate = read_pgm(ins / "gate_img1.pgm")
        assert gate.shape == (2, 2)
        assert len(list(ins.glob("gamma_img*.pgm"))) == 2 * 3

    def test_nonsquare_patch_count_gets_column_grid(self, tmp_path):
        args = [a if a != "model.m=4" else "model.m=5" for a in TINY]
        args = [a if a != "data.separation=0.8" else "data.separation=0.7" for a in args]
        out = tmp_path / "run"
        run(["train", "--out", out, *args])
        ins = tmp_path / "inspect"
        run(["inspect", "--out", ins, "--params", out / "params.npz", "--count", 1, *args])
        assert read_pgm(ins / "gamma_img0_cat0.pgm").shape == (5, 1)


class TestErrorPaths:
    def test_unknown_set_key_exits_one(self, tmp_path, capsys):
        assert run(["train", "--out", tmp_path, "--set", "model.bogus=1"]) == 1
        assert "config error" in capsys.readouterr().err

    def test_unknown_config_section_exits_one(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"nonsense": {}}')
        assert run(["train", "--config", cfg, "--out", tmp_path]) == 1

    def test_malformed_json_exits_one(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{not json")
        assert run(["train", "--config", cfg, "--out", tmp_path]) == 1

    def test_missing_data_file_exits_two(self, tmp_path, capsys):
        code = run(["train", "--out", tmp_path, *TINY, "--set", 'data.file="/nope.sspafb"'])
        assert code == 2
        assert "io error" in capsys.readouterr().err

    def test_numerical_blowup_exits_three(self, tmp_path, capsys):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            code = run(["train", "--out", tmp_path, *TINY, "--set", "train.lr=1e18"])
        assert code == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_degenerate_config_exits_one(self, tmp_path):
        args = [
            "train", "--out", tmp_path, *TINY,
            "--set", 'model.ssp_variant="none"',
            "--set", "model.enable_v2s=false",
            "--set", "model.enable_s2v=false",
            "--set", 'model.branch="G"',
        ]
        assert run(args) == 1
