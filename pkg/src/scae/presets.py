"""Named model configurations for the regularization, pooling, latent and dense ablations."""

from __future__ import annotations

import dataclasses

from .model import ConfigError, DropoutSpec, ModelConfig, RegPlacement
from .nn import RegSpec

BASELINE = ModelConfig()

_PLACE = {"e": "encoder", "d": "decoder", "ed": "both"}


def _build() -> dict[str, ModelConfig]:
    presets = {"no-reg": BASELINE}
    for suffix, placement in _PLACE.items():
        presets[f"dropout-{suffix}"] = dataclasses.replace(BASELINE, dropout=DropoutSpec(0.3, placement))
        for kind, attach in (("kr", "kernel"), ("ar", "activity")):
            for norm in ("l1", "l2"):
                reg = (RegPlacement(RegSpec(norm, 0.01, attach), placement),)
                presets[f"{kind}-{norm}-{suffix}"] = dataclasses.replace(BASELINE, reg=reg)
    presets["pool-max"] = BASELINE
    presets["pool-avg"] = dataclasses.replace(BASELINE, pooling="avg")
    presets["pool-none"] = dataclasses.replace(
        BASELINE, n_conv=6, filters=(16, 32, 64, 128, 256, 1024), pooling="none")
    for dim in (8192, 4096, 2048):
        presets[f"latent-{dim}"] = dataclasses.replace(BASELINE, latent_dim=dim)
    presets["dense"] = BASELINE
    presets["no-dense"] = dataclasses.replace(BASELINE, use_dense=False)
    return presets


PRESETS: dict[str, ModelConfig] = _build()

TABLES: dict[str, list[str]] = {
    "regularization": ["no-reg"] + [f"{k}-{s}" for k in ("dropout", "kr-l1", "kr-l2", "ar-l1", "ar-l2")
                                    for s in _PLACE],
    "pooling": ["pool-max", "pool-avg", "pool-none"],
    "latent": ["latent-8192", "latent-4096", "latent-2048"],
    "dense": ["dense", "no-dense"],
}


def get_preset(name: str) -> ModelConfig:
    """Look up a preset by (case-insensitive) name, e.g. ``"kr-l2-D"``."""
    key = name.lower()
    if key not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return PRESETS[key]
