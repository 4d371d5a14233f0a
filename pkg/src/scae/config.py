"""Run configuration: DSP, model, training, split and evaluation settings in one strict JSON file.

Every key is optional; unknown keys are rejected. A ``preset`` names a
starting model configuration which the ``model`` section then overrides.
``scae --print-config`` prints the fully populated default.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .dsp import DspConfig
from .model import ConfigError, ModelConfig
from .presets import get_preset
from .train import TrainConfig


@dataclass(frozen=True)
class SplitConfig:
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0


@dataclass(frozen=True)
class EvalConfig:
    floor_db: float = 30.0
    tol: float = 0.03
    gl_iters: int = 60


@dataclass(frozen=True)
class RunConfig:
    preset: str | None = None
    dsp: DspConfig = field(default_factory=DspConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "dsp": self.dsp.to_dict(),
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "split": {"ratios": list(self.split.ratios), "seed": self.split.seed},
            "eval": dataclasses.asdict(self.eval),
        }


def _strict(cls, section: str, d) -> object:
    if not isinstance(d, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {section!r} section: {exc}") from exc


def parse_run_config(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(d) - {f.name for f in dataclasses.fields(RunConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    preset = d.get("preset")
    model = get_preset(preset) if preset else ModelConfig()
    if "model" in d:
        merged = {**model.to_dict(), **d["model"]}
        model = ModelConfig.from_dict(merged)
    split = d.get("split", {})
    if "ratios" in split:
        split = {**split, "ratios": tuple(split["ratios"])}
    return RunConfig(
        preset=preset,
        dsp=_strict(DspConfig, "dsp", d.get("dsp", {})),
        model=model,
        train=_strict(TrainConfig, "train", d.get("train", {})),
        split=_strict(SplitConfig, "split", split),
        eval=_strict(EvalConfig, "eval", d.get("eval", {})),
    )


def load_run_config(path: str | os.PathLike | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return parse_run_config(d)
