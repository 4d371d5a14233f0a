"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .tensor import ShapeError


def check_signals(X, n_samples: int | None = None) -> np.ndarray:
    """2-D ``(n, samples)`` float64 array of finite audio; a 1-D signal becomes one row."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None]
    if X.ndim != 2:
        raise ShapeError(f"expected (n, samples) signals, got shape {X.shape}")
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if n_samples is not None and X.shape[1] != n_samples:
        raise ShapeError(f"expected signals of {n_samples} samples, got {X.shape[1]}")
    return X


def check_spectrograms(X, shape: tuple[int, int] | None = None) -> np.ndarray:
    """3-D ``(n, n_mels, frames)`` float array; a single 2-D spectrogram becomes a batch of one."""
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    X = check_array(X, dtype=(np.float32, np.float64), ensure_all_finite=True, allow_nd=True)
    if X.ndim != 3:
        raise ShapeError(f"expected (n, n_mels, frames) spectrograms, got shape {X.shape}")
    if shape is not None and X.shape[1:] != tuple(shape):
        raise ShapeError(f"expected spectrograms of shape {tuple(shape)}, got {X.shape[1:]}")
    return X


def check_unit_range(X: np.ndarray, name: str = "values") -> np.ndarray:
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got range [{X.min():.4g}, {X.max():.4g}]")
    return X


def check_latents(Z, dim: int) -> np.ndarray:
    Z = check_array(np.atleast_2d(Z), dtype=(np.float32, np.float64), ensure_all_finite=True)
    if Z.shape[1] != dim:
        raise ShapeError(f"expected latent vectors of length {dim}, got {Z.shape[1]}")
    return Z
