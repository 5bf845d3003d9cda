"""Experiment configuration: one JSON document, presets, dotted overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any

from ..errors import ContractError
from ..losses import LossWeights
from ..model import PAPER_SCALE, ModelConfig

ARMS = ("BASE", "AE", "EA", "SA", "AE+EA", "AE+SA", "FULL")
ARM_TERMS = {
    "BASE": frozenset(),
    "AE": frozenset({"rec"}),
    "EA": frozenset({"epoch"}),
    "SA": frozenset({"sequence"}),
    "AE+EA": frozenset({"rec", "epoch"}),
    "AE+SA": frozenset({"rec", "sequence"}),
    "FULL": frozenset({"rec", "epoch", "sequence"}),
}
EPOCH_ALIGNMENTS = ("moments", "mmd", "coral")


@dataclass
class DataConfig:
    domains: int = 5
    sequences: int = 200
    shift: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.domains < 2:
            raise ContractError(f"data.domains must be >= 2, got {self.domains}")
        if self.sequences <= 0:
            raise ContractError(f"data.sequences must be positive, got {self.sequences}")
        if self.shift < 0:
            raise ContractError(f"data.shift must be >= 0, got {self.shift}")


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    data: DataConfig = field(default_factory=DataConfig)
    arm: str = "FULL"
    lr: float = 1e-3
    weight_decay: float = 1e-4
    decoupled_weight_decay: bool = False
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    epochs: int = 30
    batch_size: int = 32
    sources: int = 4             # M, source domains per fold
    held_out: int = 0
    seeds: tuple = (0,)
    train_fraction: float = 0.8
    split_seed: int = 0
    epoch_alignment: str = "moments"
    ordered_pairs: bool = False
    eval_batch: int = 64

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.validate()

    def validate(self) -> None:
        self.model.validate()
        self.data.validate()
        if self.arm not in ARMS:
            raise ContractError(f"arm must be one of {ARMS}, got {self.arm!r}")
        if self.epoch_alignment not in EPOCH_ALIGNMENTS:
            raise ContractError(f"epoch_alignment must be one of {EPOCH_ALIGNMENTS}, got {self.epoch_alignment!r}")
        for name in ("epochs", "batch_size", "sources", "eval_batch"):
            if getattr(self, name) <= 0:
                raise ContractError(f"{name} must be positive, got {getattr(self, name)}")
        if self.batch_size % self.sources:
            raise ContractError(f"batch_size={self.batch_size} must be divisible by sources={self.sources}")
        if self.sources >= self.data.domains:
            raise ContractError(f"sources={self.sources} leaves no held-out domain among {self.data.domains}")
        if not 0 <= self.held_out < self.data.domains:
            raise ContractError(f"held_out={self.held_out} is not a domain id in [0, {self.data.domains})")
        if self.lr <= 0 or self.weight_decay < 0 or self.adam_eps <= 0:
            raise ContractError("lr and adam_eps must be positive, weight_decay non-negative")
        if len(self.betas) != 2 or not all(0.0 <= b < 1.0 for b in self.betas):
            raise ContractError(f"betas must be two values in [0, 1), got {self.betas}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ContractError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if not self.seeds:
            raise ContractError("seeds must be non-empty")

    @property
    def terms(self) -> frozenset:
        return ARM_TERMS[self.arm]

    @property
    def per_domain(self) -> int:
        return self.batch_size // self.sources

    def to_dict(self) -> dict:
        out = asdict(self)
        out["model"] = self.model.to_dict()
        out["betas"] = list(self.betas)
        out["seeds"] = list(self.seeds)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        preset = raw.pop("preset", "desk")
        base = preset_dict(preset)
        _merge(base, raw, prefix="")
        return cls._build(base)

    @classmethod
    def _build(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["model"] = ModelConfig(**d["model"])
        d["weights"] = LossWeights(**d["weights"])
        d["data"] = DataConfig(**d["data"])
        return cls(**d)

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        for key, value in changes.items():
            set_dotted(d, key, value)
        return ExperimentConfig._build(d)


PRESETS = ("desk", "paper")


def preset_dict(name: str) -> dict:
    if name == "desk":
        return ExperimentConfig().to_dict()
    if name == "paper":
        return ExperimentConfig(model=PAPER_SCALE, epochs=50).to_dict()
    raise ContractError(f"preset must be one of {PRESETS}, got {name!r}")


def preset(name: str) -> ExperimentConfig:
    return ExperimentConfig._build(preset_dict(name))


def _merge(base: dict, raw: dict, prefix: str) -> None:
    for key, value in raw.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ContractError(f"unknown config field '{path}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ContractError(f"config field '{path}' must be an object")
            _merge(base[key], value, prefix=f"{path}.")
        else:
            base[key] = value


def set_dotted(d: dict, key: str, value: Any) -> None:
    """``set_dotted(d, "model.d", 32)``; unknown paths raise a named-field error."""
    parts = key.split(".")
    node = d
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise ContractError(f"unknown config field '{key}'")
        node = node[part]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ContractError(f"unknown config field '{key}'")
    node[parts[-1]] = value


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a JSON config (or start from the desk preset) and apply dotted overrides."""
    raw: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ContractError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ContractError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ContractError(f"config {path} must be a JSON object")
    raw = dict(raw)
    base = preset_dict(raw.pop("preset", "desk"))
    _merge(base, raw, prefix="")
    for key, value in (overrides or {}).items():
        set_dotted(base, key, value)
    try:
        return ExperimentConfig._build(base)
    except TypeError as exc:
        raise ContractError(f"invalid config: {exc}") from None
