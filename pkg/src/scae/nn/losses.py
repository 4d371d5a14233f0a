from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RegSpec:
    """An L1/L2 penalty attached to a layer's kernel, bias or output."""

    norm: str = "l2"
    lam: float = 0.01
    attach: str = "kernel"

    def __post_init__(self):
        if self.norm not in ("l1", "l2"):
            raise ValueError(f"norm must be 'l1' or 'l2', got {self.norm!r}")
        if self.attach not in ("kernel", "bias", "activity"):
            raise ValueError(f"attach must be kernel, bias or activity, got {self.attach!r}")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff, dtype=np.float64))
    return loss, diff * pred.dtype.type(2.0 / diff.size)


def reg_penalty(spec: RegSpec, subject: np.ndarray, m: int | None = None) -> tuple[float, np.ndarray]:
    """Penalty ``lam / (2m) * sum(|w|)`` (L1) or ``lam / (2m) * sum(w**2)`` (L2).

    ``m`` defaults to the element count of ``subject``. The L1 subgradient
    uses ``sign(0) = 0``.
    """
    m = subject.size if m is None else m
    if m < 1:
        raise ValueError("parameter count m must be >= 1")
    if spec.lam == 0:
        return 0.0, np.zeros_like(subject)
    scale = spec.lam / (2.0 * m)
    if spec.norm == "l1":
        value = scale * float(np.sum(np.abs(subject), dtype=np.float64))
        grad = np.sign(subject) * subject.dtype.type(scale)
    else:
        value = scale * float(np.sum(subject * subject, dtype=np.float64))
        grad = subject * subject.dtype.type(2.0 * scale)
    return value, grad
