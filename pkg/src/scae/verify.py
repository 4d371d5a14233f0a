"""The finite-difference gradient suite run by ``scae gradcheck``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DropoutSpec, ModelConfig, RegPlacement, build_model
from .nn import (AvgPool2D, Conv2D, Conv2DTranspose, Dense, Dropout, Flatten, MaxPool2D, RegSpec,
                 Reshape, Sequential, Sigmoid, Softmax, Tanh, Upsample2D, gradcheck)
from .tensor import Xoshiro256

LAYER_TOL = 1e-6
COMPOSITE_TOL = 1e-5
COMPOSITE_SHAPE = (16, 16)


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tol: float

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.error) and self.error < self.tol)


def _distinct(rng: Xoshiro256, shape) -> np.ndarray:
    # pooling needs a unique maximum per window, otherwise the derivative is undefined
    x = rng.permutation(int(np.prod(shape))).reshape(shape).astype(np.float64)
    return x / x.size + 0.01 * rng.normal(shape)


def layer_cases(seed: int = 0) -> list[tuple[str, object, np.ndarray, bool]]:
    """``(name, layer, input, training)`` covering every layer kind in 64-bit."""
    rng = Xoshiro256(seed)
    f64 = np.float64
    cases = [
        ("conv2d", Conv2D(2, 3, 4, 2, rng=rng, dtype=f64), rng.normal((2, 2, 7, 6)), False),
        ("conv2d_transpose", Conv2DTranspose(3, 2, 4, 2, rng=rng, dtype=f64), rng.normal((2, 3, 4, 3)), False),
        ("maxpool2d", MaxPool2D(2), _distinct(rng, (2, 2, 5, 6)), False),
        ("avgpool2d", AvgPool2D(2), rng.normal((2, 2, 5, 6)), False),
        ("upsample2d", Upsample2D(2, (7, 6)), rng.normal((2, 2, 4, 3)), False),
        ("dense", Dense(6, 5, rng=rng, dtype=f64), rng.normal((3, 6)), False),
        ("tanh", Tanh(), rng.normal((3, 7)), False),
        ("sigmoid", Sigmoid(), 3 * rng.normal((3, 7)), False),
        ("softmax", Softmax(axis=1), rng.normal((2, 5, 3)), False),
        ("dropout", Dropout(0.3, Xoshiro256(seed + 7)), rng.normal((3, 8)), True),
        ("flatten", Flatten(), rng.normal((2, 3, 2, 2)), False),
        ("reshape", Reshape((3, 2, 2)), rng.normal((2, 12)), False),
    ]
    reg = Sequential(
        [Dense(5, 4, rng=rng, dtype=f64), Tanh(), Dense(4, 3, rng=rng, dtype=f64)],
        {0: [RegSpec("l2", 0.01, "kernel"), RegSpec("l1", 0.01, "bias")],
         2: [RegSpec("l1", 0.01, "activity"), RegSpec("l2", 0.01, "activity")]},
    )
    # keep every activity away from zero so the L1 subgradient is differentiable there
    x = rng.normal((3, 5))
    while np.min(np.abs(reg.forward(x))) < 1e-3:
        x = rng.normal((3, 5))
    cases.append(("regularized stack", reg, x, False))
    return cases


def composite_cases(seed: int = 0) -> list[tuple[str, object, np.ndarray, np.ndarray]]:
    """Tiny-input 3-conv encoder/decoder models, checked against an MSE objective."""
    rng = Xoshiro256(seed + 100)
    configs = {
        "composite": ModelConfig(latent_dim=32),
        "composite sigmoid": ModelConfig(latent_dim=32, output_activation="sigmoid", pooling="avg"),
        # dropped zeros tie with small pool inputs, putting max pooling's kink
        # within eps of the check point; average pooling keeps it smooth
        "composite reg+dropout": ModelConfig(
            latent_dim=32, pooling="avg", dropout=DropoutSpec(0.3, "both"),
            reg=(RegPlacement(RegSpec("l2", 0.01, "kernel"), "both"),
                 RegPlacement(RegSpec("l2", 0.01, "activity"), "decoder"))),
    }
    out = []
    for name, cfg in configs.items():
        model = build_model(cfg, seed, COMPOSITE_SHAPE, np.float64)
        x = rng.random((2, *COMPOSITE_SHAPE))
        target = rng.random((2, *COMPOSITE_SHAPE))
        out.append((name, model, x, target))
    return out


def run_suite(eps: float = 1e-5, seed: int = 0, composite_coords: int | None = 64) -> list[CheckResult]:
    """Check every layer kind and the composite models; ``composite_coords`` samples per tensor."""
    results = []
    for name, layer, x, training in layer_cases(seed):
        results.append(CheckResult(name, gradcheck(layer, x, eps, training=training, seed=seed), LAYER_TOL))
    for name, model, x, target in composite_cases(seed):
        err = gradcheck(model, x, eps, target=target, training=True, seed=seed, max_coords=composite_coords)
        results.append(CheckResult(name, err, COMPOSITE_TOL))
    return results


def format_results(results: list[CheckResult], eps: float) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"gradcheck eps={eps:g}", f"{'layer':<{width}}  {'max rel err':>12}  {'tol':>8}  status"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.error:12.3e}  {r.tol:8.0e}  {'ok' if r.ok else 'FAIL'}")
    return "\n".join(lines)
