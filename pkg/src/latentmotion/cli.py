"""``latentmotion`` command line: pca, train, generate, predict, eval, dataset.

Exit codes: 0 success, 1 invalid input (bad flags, config or files),
2 failure while running.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, inversion_config, load_config
from .data import read_png
from .export import FORMATS, export
from .generator import VideoClip, synthesize_video
from .latent import variance_report, write_variance_csv
from .checkpoint import Checkpoint, save_checkpoint
from .metrics import acd, psnr, ssim, pixel_embedder
from .motion import load_trajectory, save_trajectory
from .pipeline import (
    build_basis,
    build_dataset,
    build_generator,
    build_models,
    config_from_checkpoint,
    models_from_checkpoint,
)
from .inference import (
    diversity_std,
    interpolate_trajectory,
    model_embedder,
    predict_video,
    sample_trajectory,
    trunk_features,
)
from .tensor import NonFiniteError
from .training import Trainer

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- run dirs


def _versions() -> str:
    import PIL
    import scipy

    rows = [
        ("latentmotion", __version__),
        ("python", platform.python_version()),
        ("numpy", np.__version__),
        ("scipy", scipy.__version__),
        ("Pillow", PIL.__version__),
    ]
    return "".join(f"{k} {v}\n" for k, v in rows)


def _prepare_run(cfg: RunConfig, out) -> Path:
    out = Path(out if out is not None else cfg["outdir"])
    cfg.write_resolved(out)
    (out / "seed").write_text(f"{cfg['seed']}\n")
    (out / "versions").write_text(_versions())
    return out


def _load_run_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["outdir"] = str(args.out)
    return cfg.with_overrides(overrides)


def _formats(cfg: RunConfig) -> list[str]:
    fmts = [f.strip() for f in cfg["io.formats"].split(",") if f.strip()]
    bad = [f for f in fmts if f not in FORMATS]
    if bad:
        raise ConfigError(f"io.formats: unknown format(s) {', '.join(bad)}")
    return fmts


def _export_clip(clip, cfg: RunConfig, out: Path) -> list[str]:
    written = []
    for fmt in _formats(cfg):
        target = {"png-frames": out / "frames", "gif": out / "video.gif", "mctn": out / "video.mctn"}[fmt]
        export(clip, fmt, target)
        written.append(str(target))
    return written


def _require_checkpoint(args) -> Path:
    if not args.checkpoint:
        raise UsageError(f"{args.command}: --checkpoint is required")
    path = Path(args.checkpoint)
    if not path.is_file():
        raise FileNotFoundError(f"checkpoint {path} not found")
    return path


# ---------------------------------------------------------------- commands


def cmd_pca(args) -> int:
    cfg = _load_run_config(args)
    out = _prepare_run(cfg, args.out)
    gen = build_generator(cfg)
    basis = build_basis(cfg, gen)
    save_checkpoint(Checkpoint(basis.tensors("basis."), cfg.hash(), 0), out / "basis.mckp")
    held_out = gen.sample_latent(np.random.default_rng([cfg["seed"], 0xE7]), cfg["motion.pca_samples"])
    write_variance_csv(variance_report(basis, held_out), out / "variance.csv")
    print(f"basis k={basis.k} d={basis.dim} -> {out / 'basis.mckp'}")
    return EXIT_OK


def _train_overrides(args) -> dict:
    o = {}
    for flag, key in (("no_lm", "training.use_lm"), ("no_lcontr", "training.use_lcontr"),
                      ("no_di", "training.use_di"), ("no_dv", "training.use_dv"),
                      ("no_residual", "motion.residual")):
        if getattr(args, flag):
            o[key] = False
    if args.domain_mode is not None:
        o["training.domain_mode"] = args.domain_mode
    if args.steps is not None:
        o["training.steps"] = args.steps
    if args.frames is not None:
        o["training.n_frames"] = args.frames
    return o


def cmd_train(args) -> int:
    cfg = _load_run_config(args).with_overrides(_train_overrides(args))
    out = _prepare_run(cfg, args.out)
    gen = build_generator(cfg)
    models = build_models(cfg, gen)
    dataset = build_dataset(cfg, gen)
    trainer = Trainer(models, dataset, cfg.hash(), cfg.dump(identity_only=True))
    ckpt = out / "checkpoint.mckp"
    log = out / "losses.csv"
    if args.checkpoint:
        trainer.resume(args.checkpoint)
    elif log.exists():
        log.unlink()  # a fresh run starts a fresh log
    remaining = max(cfg["training.steps"] - trainer.step, 0)
    trainer.run(remaining, log, ckpt, cfg["training.checkpoint_every"])
    print(f"trained to step {trainer.step} -> {ckpt}")
    return EXIT_OK


def _generation_length(args, cfg: RunConfig) -> int:
    n = args.long_frames or args.frames or cfg["training.n_frames"]
    if n < 1:
        raise ConfigError("frame count must be >= 1")
    return n


def cmd_generate(args) -> int:
    path = _require_checkpoint(args)
    cfg, models = models_from_checkpoint(path)
    out = _prepare_run(cfg, args.out)
    if args.from_trajectory:
        codes, _ = load_trajectory(args.from_trajectory)
    else:
        z1 = models.gen.sample_latent(np.random.default_rng(args.z1_seed), 1)[0]
        traj = sample_trajectory(z1, _generation_length(args, cfg), args.eps_seed, models)
        save_trajectory(traj, out / "trajectory.mckp")
        codes = traj.codes.data[0]
    if args.interpolate_factor > 1:
        codes = interpolate_trajectory(codes, args.interpolate_factor).astype(np.float32)
    clip = synthesize_video(models.gen, codes, cfg["io.fps"])
    for target in _export_clip(clip, cfg, out):
        print(target)
    return EXIT_OK


def cmd_predict(args) -> int:
    path = _require_checkpoint(args)
    if not args.input:
        raise UsageError("predict: --input PNG is required")
    cfg, models = models_from_checkpoint(path)
    out = _prepare_run(cfg, args.out)
    x1 = read_png(args.input)
    c, h, w = models.gen.spec.image_shape
    if x1.shape[1:] != (h, w):
        raise ValueError(f"predict: image {x1.shape[1:]} != generator {(h, w)}")
    if c == 1:
        x1 = x1.mean(axis=0, keepdims=True)
    pred = predict_video(x1, models, inversion_config(cfg), _generation_length(args, cfg), args.eps_seed,
                         args.interpolate_factor, trunk_features(models.di), cfg["io.fps"])
    for target in _export_clip(pred.clip, cfg, out):
        print(target)
    print(f"inversion psnr {psnr(pred.clip.frames[0], x1):.2f} dB")
    return EXIT_OK


def cmd_eval(args) -> int:
    path = _require_checkpoint(args)
    cfg, models = models_from_checkpoint(path)
    out = _prepare_run(cfg, args.out)
    dataset = build_dataset(cfg, models.gen)
    inv_cfg = inversion_config(cfg)
    features = trunk_features(models.di)
    embed = pixel_embedder if cfg["eval.acd_embedder"] == "pixel" else model_embedder(models.embedder)
    count = min(cfg["eval.videos"], len(dataset))
    n = dataset.n_frames
    psnrs, ssims, acds = [], [], []
    for i in range(count):
        real = dataset.clips[i]
        pred = predict_video(real[0], models, inv_cfg, n, i, 1, features, cfg["io.fps"])
        psnrs.append(float(np.mean([psnr(a, b) for a, b in zip(pred.clip.frames, real)])))
        ssims.append(float(np.mean([ssim(a, b) for a, b in zip(pred.clip.frames, real)])))
        acds.append(acd(pred.clip.frames, embed))
    z1 = models.gen.sample_latent(np.random.default_rng([cfg["seed"], 0xE1]), 1)[0]
    div = diversity_std(z1, cfg["eval.diversity_count"], models, n)
    report = {
        "psnr": float(np.mean(psnrs)),
        "ssim": float(np.mean(ssims)),
        "acd": float(np.mean(acds)),
        "diversity_std_per_frame": [float(v) for v in div],
        "config_hash": cfg.hash(),
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    (out / "eval.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_dataset(args) -> int:
    cfg = _load_run_config(args)
    if args.clips is not None:
        cfg = cfg.with_overrides({"training.dataset_clips": args.clips})
    if args.frames is not None:
        cfg = cfg.with_overrides({"training.n_frames": args.frames})
    cfg = cfg.with_overrides({"training.dataset": "synthetic"})
    out = _prepare_run(cfg, args.out)
    gen = build_generator(cfg)
    ds = build_dataset(cfg, gen)
    for i, clip in enumerate(ds.clips):
        export(VideoClip(clip, cfg["io.fps"]), "png-frames", out / f"clip_{i:04d}")
    print(f"{len(ds)} clips -> {out}")
    return EXIT_OK


COMMANDS = {
    "pca": cmd_pca,
    "train": cmd_train,
    "generate": cmd_generate,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "dataset": cmd_dataset,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latentmotion", description="Latent-trajectory video synthesis on a frozen image generator.")
    parser.add_argument("--version", action="version", version=f"latentmotion {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat section.key = value config file")
        p.add_argument("--seed", type=int, help="run seed; overrides the config")
        p.add_argument("--out", help="output directory; overrides outdir")
        return p

    add("pca", "extract the PCA motion basis of the generator's latent space")
    p = add("train", "train the motion generator and discriminators")
    p.add_argument("--steps", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--checkpoint", help="resume from this checkpoint")
    p.add_argument("--no-lm", action="store_true", help="disable the mutual-information loss")
    p.add_argument("--no-lcontr", action="store_true", help="disable the contrastive loss")
    p.add_argument("--no-di", action="store_true", help="disable the image discriminator")
    p.add_argument("--no-dv", action="store_true", help="disable the video discriminator")
    p.add_argument("--no-residual", action="store_true", help="use absolute PCA steps instead of residuals")
    p.add_argument("--domain-mode", choices=("in", "cross"))
    for name, text in (("generate", "render a video from a trained checkpoint"),
                       ("predict", "invert a PNG frame and animate it")):
        p = add(name, text)
        p.add_argument("--checkpoint")
        p.add_argument("--frames", type=int)
        p.add_argument("--long-frames", type=int, help="unroll to this many frames")
        p.add_argument("--eps-seed", type=int, default=0)
        p.add_argument("--interpolate-factor", type=int, default=1)
        if name == "generate":
            p.add_argument("--z1-seed", type=int, default=0)
            p.add_argument("--from-trajectory", help="render a saved trajectory instead of sampling")
        else:
            p.add_argument("--input", help="first frame (PNG)")
    p = add("eval", "report PSNR, SSIM, ACD and diversity for a checkpoint")
    p.add_argument("--checkpoint")
    p = add("dataset", "write synthetic moving-blob clips as PNG folders")
    p.add_argument("--clips", type=int)
    p.add_argument("--frames", type=int)
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise UsageError("latentmotion: a subcommand is required")
        if getattr(args, "interpolate_factor", 1) < 1:
            raise UsageError("--interpolate-factor must be >= 1")
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NonFiniteError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
