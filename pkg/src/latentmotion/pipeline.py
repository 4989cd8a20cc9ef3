"""Assemble generators, bases, models and datasets from a ``RunConfig``."""

from __future__ import annotations

import numpy as np

from .checkpoint import load_checkpoint
from .config import RunConfig, basis_rank, parse_config, synthetic_config, train_config
from .data import ClipDataset, load_frame_folder, make_synthetic_dataset
from .generator import ImageGenerator, make_generator
from .latent import PcaBasis, compute_pca_basis
from .training import Models, decode_text

# stream tags for seeding independent consumers of the run seed
BASIS_STREAM = 0xBA
DATA_STREAM = 0xDD


def build_generator(cfg: RunConfig) -> ImageGenerator:
    g = "generator."
    return make_generator(cfg[g + "kind"], cfg[g + "latent_dim"], cfg[g + "image_size"], cfg[g + "seed"],
                          cfg[g + "mode"], int(cfg[g + "channels"]), cfg[g + "path"] or None)


def build_basis(cfg: RunConfig, gen: ImageGenerator) -> PcaBasis:
    """Principal directions of ``motion.pca_samples`` codes drawn from the generator's prior."""
    rng = np.random.default_rng([cfg["seed"], BASIS_STREAM])
    samples = gen.sample_latent(rng, cfg["motion.pca_samples"])
    return compute_pca_basis(samples, basis_rank(cfg))


def build_models(cfg: RunConfig, gen: ImageGenerator | None = None, basis: PcaBasis | None = None) -> Models:
    gen = build_generator(cfg) if gen is None else gen
    basis = build_basis(cfg, gen) if basis is None else basis
    return Models(gen, basis.astype(np.float32), train_config(cfg))


def build_dataset(cfg: RunConfig, gen: ImageGenerator) -> ClipDataset:
    n = cfg["training.n_frames"]
    rng = np.random.default_rng([cfg["seed"], DATA_STREAM])
    if cfg["training.dataset"] == "frame-folder":
        return load_frame_folder(cfg["training.dataset_path"], n, cfg["training.dataset_stride"], rng,
                                 cfg["io.fps"])
    if not hasattr(gen, "render"):
        raise ValueError("synthetic dataset needs a blob generator (generator.kind = blob or two_blob)")
    ds = make_synthetic_dataset(synthetic_config(cfg), gen, rng)
    ds.fps = cfg["io.fps"]
    return ds


def config_from_checkpoint(path) -> tuple[RunConfig, dict[str, np.ndarray], int]:
    ck = load_checkpoint(path)
    if "meta.config" not in ck.tensors:
        raise ValueError(f"checkpoint {path} carries no embedded config")
    cfg = parse_config(decode_text(ck.tensors["meta.config"]), f"{path}:meta.config")
    return cfg, ck.tensors, ck.step


def models_from_checkpoint(path) -> tuple[RunConfig, Models]:
    """Rebuild every network of a run and load its trained weights.

    The PCA basis comes from the checkpoint rather than being recomputed.
    """
    cfg, tensors, _ = config_from_checkpoint(path)
    gen = build_generator(cfg)
    models = build_models(cfg, gen, PcaBasis.from_tensors(tensors))
    models.load_state_tensors(tensors)
    return cfg, models
