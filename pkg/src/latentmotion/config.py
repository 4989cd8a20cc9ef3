"""Flat ``section.key = value`` run configuration.

Unknown keys, unparsable values and out-of-range values are errors that name
the offending line. ``dump`` writes every key (defaults included), and
``parse_config(dump(cfg)) == cfg``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

from .augment import AugPolicy
from .data import MOTIONS, SyntheticConfig
from .discriminators import VideoDiscConfig
from .inference import InversionConfig
from .training import LossWeights, TrainConfig


# keys that change where or how long a run goes, not what it computes per step
RUN_ONLY_KEYS = frozenset({"outdir", "training.steps", "training.checkpoint_every"})


class ConfigError(ValueError):
    """Invalid configuration text."""


def _pos(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _at_least(lo):
    return lambda v: None if v >= lo else f"must be >= {lo}"


def _unit_open(v):
    return None if 0 <= v < 1 else "must lie in [0, 1)"


def _unit(v):
    return None if 0 <= v <= 1 else "must lie in [0, 1]"


def _all_at_least(lo):
    return lambda v: None if v and all(x >= lo for x in v) else f"needs a non-empty list of values >= {lo}"


def _ordered_pair(v):
    return None if v[0] <= v[1] else "lower bound exceeds upper bound"


@dataclass(frozen=True)
class Key:
    name: str
    kind: str  # int | float | bool | str | choice | ints | pair | auto_float | auto_int
    default: Any
    check: Callable[[Any], str | None] | None = None
    choices: tuple[str, ...] = ()


SCHEMA: tuple[Key, ...] = (
    Key("seed", "int", 0, _nonneg),
    Key("outdir", "str", "run"),
    Key("generator.kind", "choice", "blob", choices=("blob", "two_blob", "external")),
    Key("generator.latent_dim", "int", 64, _at_least(2)),
    Key("generator.image_size", "int", 32, _at_least(8)),
    Key("generator.channels", "choice", "3", choices=("1", "3")),
    Key("generator.seed", "int", 0, _nonneg),
    Key("generator.mode", "choice", "z", choices=("z", "w")),
    Key("generator.mapping_depth", "int", 2, _nonneg),
    Key("generator.path", "str", ""),
    Key("motion.lam", "auto_float", None, _nonneg),
    Key("motion.k", "auto_int", None, _at_least(1)),
    Key("motion.pca_samples", "int", 10000, _at_least(2)),
    Key("motion.mapper_hidden", "auto_int", None, _at_least(1)),
    Key("motion.residual", "bool", True),
    Key("motion.detach_steps", "bool", False),
    Key("discriminators.dv_channels", "ints", (8, 16, 32, 32, 1), _all_at_least(1)),
    Key("discriminators.dv_strides", "ints", (2, 2, 2, 1, 1), _all_at_least(1)),
    Key("discriminators.dv_temporal_stride", "int", 1, _at_least(1)),
    Key("discriminators.dv_scales", "int", 2, _at_least(1)),
    Key("discriminators.dv_shared", "bool", False),
    Key("discriminators.di_channels", "ints", (8, 16, 32, 64), _all_at_least(1)),
    Key("discriminators.proj_dim", "int", 32, _at_least(1)),
    Key("discriminators.bank_size", "int", 512, _at_least(1)),
    Key("discriminators.m_ema", "float", 0.999, _unit_open),
    Key("discriminators.aug_rotation", "pair", (-180.0, 180.0), _ordered_pair),
    Key("discriminators.aug_translation", "pair", (-0.1, 0.1), _ordered_pair),
    Key("discriminators.aug_scale", "pair", (0.95, 1.05), _ordered_pair),
    Key("discriminators.aug_brightness", "pair", (-0.5, 0.5), _ordered_pair),
    Key("discriminators.aug_color", "pair", (-0.5, 0.5), _ordered_pair),
    Key("discriminators.aug_cutout", "pair", (0.0, 0.25), lambda v: _ordered_pair(v) or (
        None if 0 <= v[0] and v[1] <= 1 else "fractions must lie in [0, 1]")),
    Key("discriminators.aug_flip_prob", "float", 0.5, _unit),
    Key("training.n_frames", "int", 8, _at_least(2)),
    Key("training.batch", "int", 8, _at_least(1)),
    Key("training.steps", "int", 500, _nonneg),
    Key("training.lr", "float", 1e-4, _pos),
    Key("training.beta1", "float", 0.5, _unit_open),
    Key("training.beta2", "float", 0.999, _unit_open),
    Key("training.lambda_m", "float", 1.0, _nonneg),
    Key("training.lambda_contr", "float", 1.0, _nonneg),
    Key("training.lambda_f", "float", 1.0, _nonneg),
    Key("training.tau", "float", 0.07, _pos),
    Key("training.domain_mode", "choice", "in", choices=("in", "cross")),
    Key("training.gen_form", "choice", "nonsat", choices=("nonsat", "minimax")),
    Key("training.contrastive_variant", "choice", "literal", choices=("literal", "standard")),
    Key("training.use_lm", "bool", True),
    Key("training.use_lcontr", "bool", True),
    Key("training.use_di", "bool", True),
    Key("training.use_dv", "bool", True),
    Key("training.dataset", "choice", "synthetic", choices=("synthetic", "frame-folder")),
    Key("training.dataset_path", "str", ""),
    Key("training.dataset_clips", "int", 256, _at_least(1)),
    Key("training.dataset_motion", "choice", "mixed", choices=MOTIONS),
    Key("training.dataset_drift", "float", 0.1, _nonneg),
    Key("training.dataset_stride", "int", 2, _at_least(1)),
    Key("training.checkpoint_every", "int", 0, _nonneg),
    Key("eval.inversion_steps", "int", 2000, _at_least(1)),
    Key("eval.inversion_lr", "float", 0.01, _pos),
    Key("eval.lambda_vgg", "float", 1.0, _nonneg),
    Key("eval.inversion_restarts", "int", 8, _at_least(1)),
    Key("eval.diversity_count", "int", 16, _at_least(2)),
    Key("eval.videos", "int", 8, _at_least(1)),
    Key("eval.acd_embedder", "choice", "pixel", choices=("pixel", "model")),
    Key("io.fps", "float", 8.0, _pos),
    Key("io.formats", "str", "png-frames,gif"),
)
KEYS = {k.name: k for k in SCHEMA}


def _parse_value(key: Key, raw: str):
    raw = raw.strip()
    kind = key.kind
    if kind in ("auto_float", "auto_int") and raw.lower() == "auto":
        return None
    if kind in ("int", "auto_int"):
        return int(raw)
    if kind in ("float", "auto_float"):
        value = float(raw)
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError("not a finite number")
        return value
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"expected true/false, got {raw!r}")
    if kind == "choice":
        if raw not in key.choices:
            raise ValueError(f"expected one of {', '.join(key.choices)}")
        return raw
    if kind == "ints":
        return tuple(int(p) for p in raw.split(",") if p.strip())
    if kind == "pair":
        parts = [float(p) for p in raw.split(",")]
        if len(parts) != 2:
            raise ValueError("expected two comma-separated numbers")
        return tuple(parts)
    return raw


def _format_value(key: Key, value) -> str:
    if value is None:
        return "auto"
    if key.kind == "bool":
        return "true" if value else "false"
    if key.kind == "ints":
        return ",".join(str(v) for v in value)
    if key.kind == "pair":
        return ",".join(repr(float(v)) for v in value)
    if key.kind in ("float", "auto_float"):
        return repr(float(value))
    return str(value)


class RunConfig:
    """Validated mapping from full key names to typed values."""

    def __init__(self, values: dict[str, Any] | None = None):
        self._values = {k.name: k.default for k in SCHEMA}
        for name, value in (values or {}).items():
            self.set(name, value)

    def __getitem__(self, name: str):
        return self._values[name]

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self._values == other._values

    def __repr__(self) -> str:
        return f"RunConfig({len(self._values)} keys, hash={self.hash()[:12]})"

    def items(self):
        return self._values.items()

    def set(self, name: str, value, line: str | None = None) -> None:
        where = f"{line}: " if line else ""
        key = KEYS.get(name)
        if key is None:
            raise ConfigError(f"{where}unknown key {name!r}")
        if isinstance(value, str) and key.kind != "str":
            try:
                value = _parse_value(key, value)
            except ValueError as exc:
                raise ConfigError(f"{where}{name}: bad value ({exc})") from None
        if value is not None and key.check is not None:
            problem = key.check(value)
            if problem:
                raise ConfigError(f"{where}{name} = {_format_value(key, value)}: {problem}")
        self._values[name] = value

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        out = RunConfig()
        out._values = dict(self._values)
        for name, value in overrides.items():
            out.set(name, value)
        return out

    def dump(self, identity_only: bool = False) -> str:
        """Every key with its value.

        With ``identity_only`` the keys in ``RUN_ONLY_KEYS`` are left out, so the
        text names the experiment rather than where it is written or how long it runs.
        """
        lines = ["# resolved configuration"]
        section = None
        for key in SCHEMA:
            if identity_only and key.name in RUN_ONLY_KEYS:
                continue
            sec = key.name.split(".")[0] if "." in key.name else ""
            if sec != section:
                lines.append("")
                if sec:
                    lines.append(f"# [{sec}]")
                section = sec
            lines.append(f"{key.name} = {_format_value(key, self._values[key.name])}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.dump(identity_only=True).encode("utf-8")).hexdigest()

    def write_resolved(self, outdir=None) -> Path:
        out = Path(outdir if outdir is not None else self["outdir"])
        out.mkdir(parents=True, exist_ok=True)
        path = out / "resolved.cfg"
        path.write_text(self.dump(), encoding="utf-8")
        return path


def parse_config(text: str, source: str = "config") -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'section.key = value', got {raw.strip()!r}")
        name, value = (part.strip() for part in line.split("=", 1))
        cfg.set(name, value, where)
    _check_consistency(cfg)
    return cfg


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), str(path))


def dump(cfg: RunConfig) -> str:
    return cfg.dump()


def _check_consistency(cfg: RunConfig) -> None:
    dv = cfg["discriminators.dv_channels"]
    if len(dv) != len(cfg["discriminators.dv_strides"]):
        raise ConfigError("discriminators.dv_channels and dv_strides must have equal length")
    if dv[-1] != 1:
        raise ConfigError("discriminators.dv_channels must end with 1")
    k = cfg["motion.k"]
    if k is not None and k > cfg["generator.latent_dim"]:
        raise ConfigError("motion.k must not exceed generator.latent_dim")
    if cfg["generator.kind"] == "external" and not cfg["generator.path"]:
        raise ConfigError("generator.path is required for generator.kind = external")


def basis_rank(cfg: RunConfig) -> int:
    k = cfg["motion.k"]
    return k if k is not None else max(1, round(0.75 * cfg["generator.latent_dim"]))


def aug_policy(cfg: RunConfig) -> AugPolicy:
    p = "discriminators.aug_"
    return AugPolicy(cfg[p + "rotation"], cfg[p + "translation"], cfg[p + "scale"], cfg[p + "brightness"],
                     cfg[p + "color"], cfg[p + "cutout"], cfg[p + "flip_prob"])


def train_config(cfg: RunConfig) -> TrainConfig:
    _check_consistency(cfg)
    d = "discriminators."
    t = "training."
    try:
        return TrainConfig(
            n_frames=cfg[t + "n_frames"],
            batch=cfg[t + "batch"],
            lr=cfg[t + "lr"],
            betas=(cfg[t + "beta1"], cfg[t + "beta2"]),
            seed=cfg["seed"],
            domain_mode=cfg[t + "domain_mode"],
            lam=cfg["motion.lam"],
            weights=LossWeights(cfg[t + "lambda_m"], cfg[t + "lambda_contr"], cfg[t + "lambda_f"], cfg[t + "tau"]),
            use_lm=cfg[t + "use_lm"],
            use_lcontr=cfg[t + "use_lcontr"],
            use_di=cfg[t + "use_di"],
            use_dv=cfg[t + "use_dv"],
            residual=cfg["motion.residual"],
            detach_steps=cfg["motion.detach_steps"],
            gen_form=cfg[t + "gen_form"],
            contrastive_variant=cfg[t + "contrastive_variant"],
            mapper_hidden=cfg["motion.mapper_hidden"],
            dv=VideoDiscConfig(cfg[d + "dv_channels"], cfg[d + "dv_strides"], cfg[d + "dv_temporal_stride"],
                               cfg[d + "dv_scales"], cfg[d + "dv_shared"]),
            di_channels=cfg[d + "di_channels"],
            proj_dim=cfg[d + "proj_dim"],
            bank_size=cfg[d + "bank_size"],
            m_ema=cfg[d + "m_ema"],
            aug=aug_policy(cfg),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def synthetic_config(cfg: RunConfig, n_frames: int | None = None, drift_scale: float = 1.0) -> SyntheticConfig:
    return SyntheticConfig(
        count=cfg["training.dataset_clips"],
        n_frames=cfg["training.n_frames"] if n_frames is None else n_frames,
        motion=cfg["training.dataset_motion"],
        drift=cfg["training.dataset_drift"] * drift_scale,
    )


def inversion_config(cfg: RunConfig) -> InversionConfig:
    return InversionConfig(
        iterations=cfg["eval.inversion_steps"],
        lambda_vgg=cfg["eval.lambda_vgg"],
        lr=cfg["eval.inversion_lr"],
        seed=cfg["seed"],
        restarts=cfg["eval.inversion_restarts"],
    )
