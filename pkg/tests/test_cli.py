"""End-to-end command line runs on a tiny configuration."""

import json

import numpy as np
import pytest

from latentmotion import cli
from latentmotion.checkpoint import load_checkpoint
from latentmotion.config import load_config
from latentmotion.data import read_png
from latentmotion.tensor import NonFiniteError

TINY = """\
seed = 3
generator.latent_dim = 16
generator.image_size = 16
motion.pca_samples = 200
motion.mapper_hidden = 8
discriminators.dv_channels = 4,4,8,8,1
discriminators.dv_strides = 2,1,1,1,1
discriminators.di_channels = 4,4,8,8
discriminators.proj_dim = 8
discriminators.bank_size = 8
training.batch = 3
training.steps = 3
training.dataset_clips = 6
eval.inversion_steps = 20
eval.inversion_restarts = 1
eval.diversity_count = 2
eval.videos = 2
"""


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.cfg"
    path.write_text(TINY)
    return path


@pytest.fixture(scope="module")
def trained(tmp_path_factory, tiny_config):
    out = tmp_path_factory.mktemp("run")
    assert cli.dispatch(["train", "--config", str(tiny_config), "--out", str(out)]) == 0
    return out


def run(*argv):
    return cli.dispatch([str(a) for a in argv])


class TestRunDirectory:
    def test_records_config_seed_and_versions(self, trained, tiny_config):
        assert load_config(trained / "resolved.cfg")["generator.image_size"] == 16
        assert (trained / "seed").read_text() == "3\n"
        names = [line.split()[0] for line in (trained / "versions").read_text().splitlines()]
        assert names == ["latentmotion", "python", "numpy", "scipy", "Pillow"]

    def test_train_outputs(self, trained):
        rows = (trained / "losses.csv").read_text().splitlines()
        assert rows[0].startswith("step,loss_dv") and len(rows) == 4
        ckpt = load_checkpoint(trained / "checkpoint.mckp")
        assert ckpt.step == 3 and "basis.V" in ckpt.tensors


class TestTrain:
    def test_rerun_is_byte_identical(self, trained, tiny_config, tmp_path):
        assert run("train", "--config", tiny_config, "--out", tmp_path) == 0
        for name in ("losses.csv", "checkpoint.mckp"):
            assert (tmp_path / name).read_bytes() == (trained / name).read_bytes()

    def test_resume_with_more_steps_matches_straight_run(self, tiny_config, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run("train", "--config", tiny_config, "--out", a, "--steps", 4) == 0
        assert run("train", "--config", tiny_config, "--out", b, "--steps", 2) == 0
        assert run("train", "--config", tiny_config, "--out", b, "--steps", 4,
                   "--checkpoint", b / "checkpoint.mckp") == 0
        for name in ("losses.csv", "checkpoint.mckp"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_resume_rejects_changed_config(self, trained, tiny_config, tmp_path, capsys):
        code = run("train", "--config", tiny_config, "--out", tmp_path, "--no-lm",
                   "--checkpoint", trained / "checkpoint.mckp")
        assert code == 1 and "different config" in capsys.readouterr().err

    def test_ablation_flags_blank_their_columns(self, tiny_config, tmp_path):
        assert run("train", "--config", tiny_config, "--out", tmp_path, "--steps", 1, "--no-lm", "--no-lcontr") == 0
        header, row = (tmp_path / "losses.csv").read_text().splitlines()
        values = dict(zip(header.split(","), row.split(",")))
        assert values["loss_m"] == "" and values["loss_contr"] == "" and values["loss_dv"] != ""


class TestGenerate:
    def test_frames_and_gif(self, trained, tmp_path):
        assert run("generate", "--checkpoint", trained / "checkpoint.mckp", "--z1-seed", 7, "--frames", 8,
                   "--out", tmp_path) == 0
        assert len(sorted((tmp_path / "frames").glob("frame_*.png"))) == 8
        assert (tmp_path / "video.gif").is_file() and (tmp_path / "trajectory.mckp").is_file()

    def test_repeat_gives_identical_frames(self, trained, tmp_path):
        for out in ("a", "b"):
            assert run("generate", "--checkpoint", trained / "checkpoint.mckp", "--z1-seed", 7,
                       "--out", tmp_path / out) == 0
        for fa in sorted((tmp_path / "a" / "frames").iterdir()):
            assert fa.read_bytes() == (tmp_path / "b" / "frames" / fa.name).read_bytes()

    def test_long_and_interpolated(self, trained, tmp_path):
        assert run("generate", "--checkpoint", trained / "checkpoint.mckp", "--long-frames", 16,
                   "--interpolate-factor", 2, "--out", tmp_path) == 0
        assert len(list((tmp_path / "frames").glob("*.png"))) == 31

    def test_from_trajectory_reproduces_frames(self, trained, tmp_path):
        ck = trained / "checkpoint.mckp"
        assert run("generate", "--checkpoint", ck, "--z1-seed", 2, "--out", tmp_path / "a") == 0
        assert run("generate", "--checkpoint", ck, "--from-trajectory", tmp_path / "a" / "trajectory.mckp",
                   "--out", tmp_path / "b") == 0
        for fa in sorted((tmp_path / "a" / "frames").iterdir()):
            assert fa.read_bytes() == (tmp_path / "b" / "frames" / fa.name).read_bytes()

    def test_checkpoint_is_not_modified(self, trained, tmp_path):
        before = (trained / "checkpoint.mckp").read_bytes()
        run("generate", "--checkpoint", trained / "checkpoint.mckp", "--out", tmp_path)
        assert (trained / "checkpoint.mckp").read_bytes() == before


class TestPredictAndEval:
    def test_predict(self, trained, tmp_path, capsys):
        run("generate", "--checkpoint", trained / "checkpoint.mckp", "--out", tmp_path / "g")
        frame = tmp_path / "g" / "frames" / "frame_0000.png"
        before = frame.read_bytes()
        assert run("predict", "--checkpoint", trained / "checkpoint.mckp", "--input", frame,
                   "--frames", 5, "--out", tmp_path / "p") == 0
        assert len(list((tmp_path / "p" / "frames").glob("*.png"))) == 5
        assert "inversion psnr" in capsys.readouterr().out
        assert frame.read_bytes() == before

    def test_predict_needs_input(self, trained, tmp_path):
        assert run("predict", "--checkpoint", trained / "checkpoint.mckp", "--out", tmp_path) == 1

    def test_predict_rejects_wrong_size(self, trained, tmp_path):
        from PIL import Image

        Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(tmp_path / "x.png")
        assert run("predict", "--checkpoint", trained / "checkpoint.mckp", "--input", tmp_path / "x.png",
                   "--out", tmp_path / "p") == 1

    def test_eval_report(self, trained, tmp_path):
        assert run("eval", "--checkpoint", trained / "checkpoint.mckp", "--out", tmp_path) == 0
        report = json.loads((tmp_path / "eval.json").read_text())
        assert set(report) == {"psnr", "ssim", "acd", "diversity_std_per_frame", "config_hash"}
        assert len(report["diversity_std_per_frame"]) == 8 and report["diversity_std_per_frame"][0] == 0
        assert report["config_hash"] == load_checkpoint(trained / "checkpoint.mckp").config_hash


class TestPcaAndDataset:
    def test_pca(self, tiny_config, tmp_path):
        assert run("pca", "--config", tiny_config, "--out", tmp_path) == 0
        basis = load_checkpoint(tmp_path / "basis.mckp").tensors["basis.V"]
        assert basis.shape == (12, 16)  # k rows of length d
        rows = (tmp_path / "variance.csv").read_text().splitlines()
        assert rows[0] == "component,cumulative_ratio" and len(rows) == 13
        ratios = [float(r.split(",")[1]) for r in rows[1:]]
        assert np.all(np.diff(ratios) >= 0) and ratios[-1] <= 1 + 1e-12

    def test_dataset_folders(self, tiny_config, tmp_path):
        assert run("dataset", "--config", tiny_config, "--out", tmp_path, "--clips", 4) == 0
        clips = sorted(p for p in tmp_path.iterdir() if p.is_dir())
        assert [p.name for p in clips] == [f"clip_{i:04d}" for i in range(4)]
        assert all(len(list(p.glob("frame_*.png"))) == 8 for p in clips)
        assert read_png(clips[0] / "frame_0000.png").shape == (3, 16, 16)


class TestExitCodes:
    def test_no_subcommand(self, capsys):
        assert run() == 1

    def test_unknown_subcommand(self, capsys):
        assert run("render") == 1

    def test_bad_config_names_line(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("seed = 1\ntraining.tau = -1\n")
        assert run("pca", "--config", bad, "--out", tmp_path / "o") == 1
        assert f"{bad}:2: training.tau = -1.0: must be > 0" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert run("pca", "--config", tmp_path / "nope.cfg") == 1

    def test_missing_checkpoint(self, tmp_path, capsys):
        assert run("generate", "--checkpoint", tmp_path / "none.mckp", "--out", tmp_path) == 1
        assert "not found" in capsys.readouterr().err
        assert run("eval", "--out", tmp_path) == 1

    def test_bad_interpolation_factor(self, trained, tmp_path):
        assert run("generate", "--checkpoint", trained / "checkpoint.mckp", "--interpolate-factor", 0,
                   "--out", tmp_path) == 1

    def test_runtime_failures_exit_two(self, monkeypatch, capsys):
        def boom(args):
            raise NonFiniteError("loss_dv: non-finite value")

        monkeypatch.setitem(cli.COMMANDS, "pca", boom)
        assert run("pca") == 2
        assert "runtime failure" in capsys.readouterr().err

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run("--version")
        assert exc.value.code == 0
