"""Experiment configuration: a flat key-value file plus CLI overrides.

Every field is validated up front; the resolved config is serialized next to
each stage's outputs so reruns are reproducible from the artifacts alone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, ParseError
from .prompts import INDEX_MODE, TEXT_MODE


@dataclass
class ExperimentConfig:
    seed: int = 7

    # synthetic corpus
    n_videos: int = 20
    n_gestures: int = 8
    frames_per_video: int = 320
    n_users: int = 4
    noise_level: float = 0.1
    grid: int = 16
    segment_min: int = 20
    segment_max: int = 60
    gap_min: int = 12
    gap_max: int = 28
    shared_scale: float = 12.0
    class_scale: float = 0.5

    # sub-video sampling
    strides: str = "4,8,16"
    hop: int = 16

    # encoders
    dim: int = 64
    hidden: int = 64
    heads: int = 4

    # contrastive pre-training
    temperature: float = 0.07
    batch_size: int = 8
    pretrain_epochs: int = 50
    pretrain_lr: float = 3e-4

    # experimental condition
    allowed_gestures: str = ""  # empty = all gestures
    prompt_mode: str = TEXT_MODE

    # evaluation split
    split: str = "louo"  # louo | fixed
    test_videos: str = ""
    n_test: int = 10
    folds: str = ""  # comma list of fold indices, empty = all

    # recognizer
    channels: int = 32
    pg_layers: int = 5
    refine_stages: int = 2
    refine_layers: int = 5
    smoothing: float = 0.15
    smooth_clip: float = 16.0
    train_epochs: int = 10
    train_lr: float = 1e-3

    # metrics
    ignore_placeholders: bool = True

    def stride_set(self) -> tuple[int, ...]:
        return _parse_int_list(self.strides, "strides")

    def allowed_set(self) -> set[str] | None:
        if not self.allowed_gestures.strip():
            return None
        return {token.strip() for token in self.allowed_gestures.split(",") if token.strip()}

    def fold_indices(self) -> tuple[int, ...] | None:
        if not self.folds.strip():
            return None
        return _parse_int_list(self.folds, "folds")

    def test_video_list(self) -> list[str]:
        return [token.strip() for token in self.test_videos.split(",") if token.strip()]

    def validate(self) -> "ExperimentConfig":
        if self.prompt_mode not in (TEXT_MODE, INDEX_MODE):
            raise ConfigError(f"prompt_mode must be text or index, got {self.prompt_mode!r}")
        if self.split not in ("louo", "fixed"):
            raise ConfigError(f"split must be louo or fixed, got {self.split!r}")
        strides = self.stride_set()
        if not strides or min(strides) < 1:
            raise ConfigError(f"strides must be positive integers, got {self.strides!r}")
        positive = (
            "n_videos", "n_gestures", "frames_per_video", "n_users", "grid",
            "segment_min", "segment_max", "hop", "dim", "hidden", "heads",
            "batch_size", "channels", "pg_layers", "refine_layers", "n_test",
        )
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        nonnegative = (
            "noise_level", "gap_min", "gap_max", "pretrain_epochs", "train_epochs",
            "refine_stages", "smoothing", "smooth_clip", "pretrain_lr", "train_lr",
        )
        for name in nonnegative:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.segment_max < self.segment_min or self.gap_max < self.gap_min:
            raise ConfigError("segment/gap ranges must satisfy min <= max")
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim {self.dim} must be divisible by heads {self.heads}")
        if self.fold_indices() is not None and min(self.fold_indices()) < 0:
            raise ConfigError("fold indices must be nonnegative")
        return self

    def to_text(self) -> str:
        lines = []
        for field in dataclasses.fields(self):
            lines.append(f"{field.name} = {getattr(self, field.name)}\n")
        return "".join(lines)

    def write(self, path: Path | str) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def _parse_int_list(text: str, name: str) -> tuple[int, ...]:
    try:
        return tuple(int(token.strip()) for token in text.split(",") if token.strip())
    except ValueError:
        raise ConfigError(f"{name} must be a comma-separated integer list, got {text!r}") from None


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _convert(name: str, raw: str):
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    kind = _FIELDS[name].type
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for config key {name}") from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ParseError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        values[key.strip()] = _convert(key.strip(), raw)
    return values


def load_config(
    path: Path | str | None = None, overrides: dict[str, str] | None = None
) -> ExperimentConfig:
    values: dict = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    for key, raw in (overrides or {}).items():
        values[key] = _convert(key, raw)
    return ExperimentConfig(**values).validate()
