"""Declarative pipeline configuration (YAML), validated before any work is done."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .corpus import Schema
from .encoder import POOL_CLS, POOL_MEAN
from .errors import ConfigError


@dataclass
class DatasetSection:
    path: str = ""
    schema: str = "generic"
    test_path: str | None = None
    train_fraction: float = 0.8
    language: str = "en"
    label_rule: str | None = None
    text_column: str | None = None


@dataclass
class TokenizerSection:
    vocab_path: str = "vocab.txt"
    vocab_size: int = 200
    window: int = 64
    stride: int | None = None
    lowercase: bool = True


@dataclass
class ModelSection:
    width: int = 32
    heads: int = 4
    head_dim: int = 8
    layers: int = 2
    ffn_dim: int = 64
    positional: bool = True
    init_checkpoint: str | None = None     # encoder to start from (e.g. the MLM output)
    checkpoint: str = "classifier.json"    # task model written / read by predict, attribute, ...


@dataclass
class TrainSection:
    approach: str = "C"
    epochs: int = 2
    batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    p_mask: float = 0.15
    l2_lambda: float = 1e-3
    max_iter: int = 5000
    pooling: str = POOL_MEAN
    exclude_specials: bool = False


@dataclass
class TaskSection:
    combine: str = "auto"                  # OR for binary models, MEAN otherwise
    ig_steps: int = 64
    attribute_limit: int = 20
    mapping_path: str | None = None
    fallback_label: str | None = None
    fallback_threshold: float = 50.0
    pca_k: int = 10
    eps_percentile: float = 10.0
    min_pts: int = 5
    mmr_lambda: float = 0.7
    top_words: int = 10
    predictions_path: str | None = None


@dataclass
class PipelineConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    dataset: DatasetSection = field(default_factory=DatasetSection)
    tokenizer: TokenizerSection = field(default_factory=TokenizerSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    task: TaskSection = field(default_factory=TaskSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def out(self, name: str | None) -> Path | None:
        """Resolve an artifact path: absolute paths stay, relative ones live in ``output_dir``."""
        if name is None:
            return None
        p = Path(name)
        return p if p.is_absolute() else Path(self.output_dir) / p


_SECTIONS = {"dataset": DatasetSection, "tokenizer": TokenizerSection, "model": ModelSection,
             "train": TrainSection, "task": TaskSection}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"section {where!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where!r}: {', '.join(unknown)}")
    return cls(**data)


def from_dict(data: dict | None) -> PipelineConfig:
    data = dict(data or {})
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], value or {}, key)
        elif key in ("seed", "output_dir"):
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown top-level key {key!r}")
    cfg = PipelineConfig(**kwargs)
    validate(cfg)
    return cfg


def apply_override(data: dict, assignment: str) -> None:
    """Apply ``section.key=value`` (or ``key=value`` at top level); the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = yaml.safe_load(raw) if raw != "" else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from None
    if isinstance(value, (dict, list)):
        raise ConfigError("overrides may only set scalar fields")
    parts = key.strip().split(".")
    if len(parts) == 1:
        data[parts[0]] = value
    elif len(parts) == 2:
        section = data.setdefault(parts[0], {})
        if not isinstance(section, dict):
            raise ConfigError(f"{parts[0]!r} is not a section")
        section[parts[1]] = value
    else:
        raise ConfigError(f"override key {key!r} is nested too deeply")


def load_config(path, overrides=()) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    for o in overrides:
        apply_override(data, o)
    return from_dict(data)


def _check_type(value, types, where):
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"{where} has the wrong type")
    if not isinstance(value, types):
        raise ConfigError(f"{where} has the wrong type")


def validate(cfg: PipelineConfig) -> None:
    _check_type(cfg.seed, (int,), "seed")
    for name, section in _SECTIONS.items():
        obj = getattr(cfg, name)
        for f in dataclasses.fields(section):
            v = getattr(obj, f.name)
            if v is None:
                continue
            default = f.default if f.default is not dataclasses.MISSING else None
            if isinstance(default, bool):
                _check_type(v, (bool,), f"{name}.{f.name}")
            elif isinstance(default, int):
                _check_type(v, (int,), f"{name}.{f.name}")
            elif isinstance(default, float):
                if isinstance(v, str):          # YAML 1.1 reads "3e-4" (no dot) as a string
                    try:
                        v = float(v)
                    except ValueError:
                        raise ConfigError(f"{name}.{f.name} has the wrong type") from None
                _check_type(v, (int, float), f"{name}.{f.name}")
                setattr(obj, f.name, float(v))
            elif isinstance(default, str):
                _check_type(v, (str,), f"{name}.{f.name}")
    try:
        Schema(cfg.dataset.schema.upper())
    except ValueError:
        raise ConfigError(f"unknown dataset schema {cfg.dataset.schema!r}") from None
    if not 0.0 < cfg.dataset.train_fraction < 1.0:
        raise ConfigError("dataset.train_fraction must lie in (0, 1)")
    if cfg.train.approach not in ("B", "C"):
        raise ConfigError("train.approach must be 'B' or 'C'")
    if cfg.train.pooling not in (POOL_CLS, POOL_MEAN):
        raise ConfigError("train.pooling must be 'cls' or 'mean'")
    if cfg.tokenizer.window < 3:
        raise ConfigError("tokenizer.window must be >= 3")
    if cfg.tokenizer.stride is not None and not 0 < cfg.tokenizer.stride <= cfg.tokenizer.window - 2:
        raise ConfigError("tokenizer.stride must lie in (0, window - 2]")
    if cfg.tokenizer.vocab_size < 6:
        raise ConfigError("tokenizer.vocab_size must be >= 6")
    if cfg.task.combine not in ("auto", "or", "mean"):
        raise ConfigError("task.combine must be 'auto', 'or' or 'mean'")
    if cfg.task.ig_steps < 1:
        raise ConfigError("task.ig_steps must be >= 1")
    if cfg.train.l2_lambda < 0:
        raise ConfigError("train.l2_lambda must be >= 0")
    if cfg.model.width % 2:
        raise ConfigError("model.width must be even")


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)
