"""Waveform <-> log-mel-spectrogram conversions and Griffin-Lim resynthesis."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .tensor import Xoshiro256


class DspError(ValueError):
    pass


class DegenerateStatsError(DspError):
    pass


@dataclass(frozen=True)
class DspConfig:
    sample_rate: int = 16000
    window_len: int = 690
    fft_size: int = 1024
    hop: int = 250
    n_mels: int = 128
    fmin: float = 0.0
    fmax: float = 8000.0
    target_frames: int = 256
    db_floor: float = -100.0
    per_sample_norm: bool = False

    def __post_init__(self):
        if self.window_len < 2 or self.window_len > self.fft_size:
            raise DspError(f"window_len must be in [2, fft_size], got {self.window_len}")
        if self.hop < 1:
            raise DspError("hop must be >= 1")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise DspError(f"need 0 <= fmin < fmax <= sample_rate/2, got fmin={self.fmin} fmax={self.fmax}")
        if self.n_mels < 2:
            raise DspError("n_mels must be >= 2")
        if self.target_frames < 1:
            raise DspError("target_frames must be >= 1")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class LogMelSpec:
    """Normalized log-mel values plus the dB twin they were derived from.

    ``denormalize(values)`` reproduces ``db`` wherever ``db`` falls inside
    ``[norm_min, norm_max]``; outside that range values are clipped.
    """

    values: np.ndarray
    db: np.ndarray
    norm_min: float
    norm_max: float

    @property
    def stats(self) -> tuple[float, float]:
        return self.norm_min, self.norm_max

    def denormalize(self) -> np.ndarray:
        return denormalize(self.values, self.stats)


def blackman_window(n: int) -> np.ndarray:
    if n < 2:
        raise DspError(f"window length must be >= 2, got {n}")
    k = np.arange(n, dtype=np.float64)
    phase = 2.0 * np.pi * k / (n - 1)
    w = 0.42 - 0.5 * np.cos(phase) + 0.08 * np.cos(2.0 * phase)
    w[0] = w[-1] = 0.0  # exact zeros; the cosine sum leaves ~1e-17 residue
    return w


def n_frames(n_samples: int, cfg: DspConfig) -> int:
    return (n_samples - cfg.window_len) // cfg.hop + 1


def stft(signal: np.ndarray, cfg: DspConfig) -> np.ndarray:
    """Complex spectrogram of shape ``(fft_size // 2 + 1, frames)``."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1:
        raise DspError("stft expects a 1-D signal")
    if x.size < cfg.window_len:
        raise DspError(f"signal of {x.size} samples is shorter than one window ({cfg.window_len})")
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_len)[:: cfg.hop]
    windowed = frames * blackman_window(cfg.window_len)
    return np.fft.rfft(windowed, n=cfg.fft_size, axis=1).T


def istft(spec: np.ndarray, cfg: DspConfig) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft` (squared-window normalized)."""
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[0] != cfg.n_bins:
        raise DspError(f"spectrogram must have {cfg.n_bins} bins, got shape {spec.shape}")
    n = spec.shape[1]
    w = blackman_window(cfg.window_len)
    frames = np.fft.irfft(spec.T, n=cfg.fft_size, axis=1)[:, : cfg.window_len] * w
    length = (n - 1) * cfg.hop + cfg.window_len
    out = np.zeros(length)
    norm = np.zeros(length)
    for t in range(n):
        sl = slice(t * cfg.hop, t * cfg.hop + cfg.window_len)
        out[sl] += frames[t]
        norm[sl] += w * w
    # the outermost samples see only the window's near-zero tails; flooring
    # the normalizer fades them out instead of amplifying by up to 1/w
    floor = 1e-2 * norm.max() if norm.max() > 0 else 1.0
    return out / np.maximum(norm, floor)


def hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise DspError("frequency must be non-negative")
    m = 2595.0 * np.log10(1.0 + f / 700.0)
    return m.item() if m.ndim == 0 else m


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise DspError("mel value must be non-negative")
    f = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return f.item() if f.ndim == 0 else f


def mel_points_hz(cfg: DspConfig) -> np.ndarray:
    """The ``n_mels + 2`` filter edge/center frequencies, uniform in mel."""
    mels = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return mel_to_hz(mels)


def mel_centers_hz(cfg: DspConfig) -> np.ndarray:
    return mel_points_hz(cfg)[1:-1]


def mel_filterbank(cfg: DspConfig) -> np.ndarray:
    """Triangular filters ``(n_mels, n_bins)``, each scaled to a peak weight of 1."""
    pts = mel_points_hz(cfg)
    freqs = np.arange(cfg.n_bins) * cfg.sample_rate / cfg.fft_size
    lo, mid, hi = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    peaks = fb.max(axis=1)
    if np.any(peaks <= 0):
        empty = int(np.argmin(peaks))
        raise DspError(
            f"n_mels={cfg.n_mels} too large for fft_size={cfg.fft_size}: filter {empty} covers no FFT bin"
        )
    return fb / peaks[:, None]


def _fit_frames(db: np.ndarray, cfg: DspConfig) -> np.ndarray:
    t = db.shape[1]
    if t >= cfg.target_frames:
        return db[:, : cfg.target_frames]
    pad = np.full((db.shape[0], cfg.target_frames - t), cfg.db_floor)
    return np.concatenate([db, pad], axis=1)


def mel_db(signal: np.ndarray, cfg: DspConfig, filterbank: np.ndarray | None = None) -> np.ndarray:
    """dB mel spectrogram ``(n_mels, target_frames)`` before normalization."""
    fb = mel_filterbank(cfg) if filterbank is None else filterbank
    mel = fb @ np.abs(stft(signal, cfg))
    floor = 10.0 ** (cfg.db_floor / 20.0)
    db = 20.0 * np.log10(np.maximum(mel, floor))
    return _fit_frames(db, cfg)


def normalize_stats(db_specs) -> tuple[float, float]:
    db_specs = list(db_specs)
    if not db_specs:
        raise DspError("need at least one spectrogram to compute normalization stats")
    lo = min(float(np.min(d)) for d in db_specs)
    hi = max(float(np.max(d)) for d in db_specs)
    if hi == lo:
        raise DegenerateStatsError(f"all dB values equal {lo}; cannot normalize")
    return lo, hi


def normalize(db: np.ndarray, stats: tuple[float, float]) -> np.ndarray:
    lo, hi = stats
    if hi == lo:
        raise DegenerateStatsError("norm_max == norm_min")
    return np.clip((np.asarray(db, dtype=np.float64) - lo) / (hi - lo), 0.0, 1.0)


def denormalize(values: np.ndarray, stats: tuple[float, float]) -> np.ndarray:
    lo, hi = stats
    if hi == lo:
        raise DegenerateStatsError("norm_max == norm_min")
    return np.asarray(values, dtype=np.float64) * (hi - lo) + lo


def log_mel_spectrogram(
    signal: np.ndarray,
    cfg: DspConfig = DspConfig(),
    stats: tuple[float, float] | None = None,
    filterbank: np.ndarray | None = None,
) -> LogMelSpec:
    """Log-mel spectrogram normalized to [0, 1].

    Without ``stats`` the spectrogram is normalized by its own min/max
    (per-sample mode); corpus pipelines pass the training-split stats.
    """
    db = mel_db(signal, cfg, filterbank)
    if stats is None:
        stats = normalize_stats([db])
    values = normalize(db, stats)
    return LogMelSpec(values.astype(np.float32), db.astype(np.float32), float(stats[0]), float(stats[1]))


def db_to_amplitude(db: np.ndarray) -> np.ndarray:
    return 10.0 ** (np.asarray(db, dtype=np.float64) / 20.0)


def mel_to_linear(mel_mag: np.ndarray, filterbank: np.ndarray) -> np.ndarray:
    """Least-squares (pseudo-inverse) map from mel magnitudes back to FFT bins."""
    mel_mag = np.asarray(mel_mag, dtype=np.float64)
    if mel_mag.shape[0] != filterbank.shape[0]:
        raise DspError(f"mel input has {mel_mag.shape[0]} bands, filterbank has {filterbank.shape[0]}")
    return np.maximum(np.linalg.pinv(filterbank) @ mel_mag, 0.0)


def spectral_convergence(signal: np.ndarray, mag: np.ndarray, cfg: DspConfig) -> float:
    ref = np.linalg.norm(mag)
    if ref == 0:
        return 0.0
    est = np.abs(stft(signal, cfg))
    t = min(est.shape[1], mag.shape[1])
    return float(np.linalg.norm(est[:, :t] - mag[:, :t]) / ref)


def griffin_lim(
    mag: np.ndarray,
    cfg: DspConfig = DspConfig(),
    iters: int = 60,
    rng: Xoshiro256 | None = None,
) -> tuple[np.ndarray, list[float]]:
    """Classic Griffin-Lim phase retrieval from a linear STFT magnitude.

    Returns the signal and the spectral-convergence residual of each
    iterate, ``||(|STFT(x_k)| - mag)||_F / ||mag||_F``.
    """
    mag = np.asarray(mag, dtype=np.float64)
    if iters < 1:
        raise DspError("iters must be >= 1")
    if mag.ndim != 2 or mag.shape[0] != cfg.n_bins:
        raise DspError(f"magnitude must have {cfg.n_bins} bins, got shape {mag.shape}")
    if np.any(mag < 0):
        raise DspError("magnitude must be non-negative")
    length = (mag.shape[1] - 1) * cfg.hop + cfg.window_len
    ref = np.linalg.norm(mag)
    if ref == 0:
        return np.zeros(length), [0.0] * iters
    rng = Xoshiro256(0) if rng is None else rng
    phase = np.exp(2j * np.pi * rng.random(mag.shape))
    residuals = []
    x = np.zeros(length)
    for _ in range(iters):
        x = istft(mag * phase, cfg)
        spec = stft(x, cfg)
        est = np.abs(spec)
        residuals.append(float(np.linalg.norm(est - mag) / ref))
        phase = np.where(est > 0, spec / np.maximum(est, 1e-300), 1.0)
    return x, residuals
