"""Run configuration: one YAML file describes a whole train/eval run.

Every run can be reproduced from its effective config: ``dump_effective``
writes the fully-resolved settings (defaults included), and parsing that
dump yields the identical configuration.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .backbones import BackboneConfig
from .errors import ConfigurationError
from .model import ModelConfig
from .training import TrainConfig


@dataclass
class DataConfig:
    """Where the dataset lives, or how to generate the synthetic one."""

    root: str = "data/synthetic"
    kind: str = "synthetic"
    generate: bool = True  # write the synthetic set into root when missing
    num_samples: int = 10
    image_size: int = 64
    exclusions: str | None = None


@dataclass
class EvalSettings:
    band_radius: int | None = None  # None -> 2% of the image diagonal
    use_gt_box: bool = True


@dataclass
class RunConfig:
    mode: str = "toy"
    seed: int = 0
    backbone: dict = field(default_factory=dict)  # BackboneConfig overrides
    model: dict = field(default_factory=dict)  # ModelConfig overrides
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalSettings = field(default_factory=EvalSettings)
    output_dir: str = "runs/default"

    def __post_init__(self):
        if self.mode not in ("toy", "real"):
            raise ConfigurationError(f"mode must be 'toy' or 'real', got {self.mode!r}")
        _check_keys(self.backbone, BackboneConfig, "backbone", forbidden=("mode", "seed"))
        _check_keys(self.model, ModelConfig, "model", forbidden=("backbone",))

    def model_config(self) -> ModelConfig:
        backbone = BackboneConfig(mode=self.mode, seed=self.seed, **self.backbone)
        return ModelConfig(backbone=backbone, **self.model)

    def effective_dict(self) -> dict:
        """Fully-resolved settings; parsing this dict reproduces the config."""
        mc = self.model_config()
        backbone = {
            k: v
            for k, v in asdict(mc.backbone).items()
            if k not in ("mode", "seed")
        }
        model = {
            "d_hidden": mc.d_hidden,
            "normalization": mc.normalization,
            "visual_input_size": mc.visual_input_size,
            "decoder_input_size": mc.decoder_input_size,
            "projection_weights": mc.projection_weights,
        }
        return {
            "mode": self.mode,
            "seed": self.seed,
            "backbone": backbone,
            "model": model,
            "train": asdict(self.train),
            "data": asdict(self.data),
            "eval": asdict(self.eval),
            "output_dir": self.output_dir,
        }


def _check_keys(overrides: dict, cls, section: str, forbidden=()) -> None:
    if not isinstance(overrides, dict):
        raise ConfigurationError(f"config section {section!r} must be a mapping")
    allowed = {f.name for f in fields(cls)} - set(forbidden)
    for key in overrides:
        if key in forbidden:
            raise ConfigurationError(
                f"config section {section!r} may not set {key!r} (set it at the top level)"
            )
        if key not in allowed:
            raise ConfigurationError(
                f"unknown key {key!r} in config section {section!r}; allowed: {sorted(allowed)}"
            )


def _build_section(cls, raw: dict, section: str):
    if not isinstance(raw, dict):
        raise ConfigurationError(f"config section {section!r} must be a mapping")
    allowed = {f.name for f in fields(cls)}
    for key in raw:
        if key not in allowed:
            raise ConfigurationError(
                f"unknown key {key!r} in config section {section!r}; allowed: {sorted(allowed)}"
            )
    return cls(**raw)


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("run config must be a mapping at the top level")
    known = {f.name for f in fields(RunConfig)}
    for key in raw:
        if key not in known:
            raise ConfigurationError(f"unknown top-level config key {key!r}; allowed: {sorted(known)}")
    kwargs = dict(raw)
    if "train" in kwargs:
        kwargs["train"] = _build_section(TrainConfig, kwargs["train"], "train")
    if "data" in kwargs:
        kwargs["data"] = _build_section(DataConfig, kwargs["data"], "data")
    if "eval" in kwargs:
        kwargs["eval"] = _build_section(EvalSettings, kwargs["eval"], "eval")
    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"config file {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    return config_from_dict(raw)


def dump_effective(config: RunConfig, path=None) -> str:
    """Serialize the fully-resolved config as YAML; optionally write it."""
    text = yaml.safe_dump(config.effective_dict(), sort_keys=True, default_flow_style=False)
    if path is not None:
        Path(path).write_text(text)
    return text
