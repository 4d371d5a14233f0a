"""Reconstruction metrics: RMSE, SSIM and harmonic peak precision/recall/F1.

The peak metric works per time frame on dB mel spectra: local maxima in the
original and generated frames are detected, peaks more than 30 dB below the
frame's strongest peak are dropped, and the survivors are matched one-to-one
when their frequencies agree within +-3% of the original's frequency.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .dsp import LogMelSpec, denormalize

COLUMNS = ("rmse", "ssim", "recall", "precision", "f1")
HEADERS = ("RMSE", "SSIM", "Recall", "Precision", "F1")


@dataclass(frozen=True)
class Peak:
    mel_bin: int
    freq: float
    amp: float


@dataclass
class SampleMetrics:
    rmse: float
    ssim: float
    precision: float
    recall: float
    f1: float
    frames_scored: int = 0


@dataclass
class EvalReport:
    rows: list[tuple[str, SampleMetrics]]
    mean: SampleMetrics

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", *HEADERS, "frames_scored"])
        for name, m in [*self.rows, ("mean", self.mean)]:
            writer.writerow([name, *(f"{getattr(m, c):.6f}" for c in COLUMNS), m.frames_scored])
        return buf.getvalue()

    def to_text(self, label: str | None = None) -> str:
        width = max([len("Experiment"), len(label or "")] + [len(n) for n, _ in self.rows] + [4])
        lines = [f"{'Experiment':<{width}}  " + "  ".join(f"{h:>9}" for h in HEADERS)]
        lines.append("-" * len(lines[0]))
        for name, m in self.rows:
            lines.append(f"{name:<{width}}  " + "  ".join(f"{getattr(m, c):9.3f}" for c in COLUMNS))
        lines.append("-" * len(lines[0]))
        lines.append(f"{label or 'mean':<{width}}  " + "  ".join(f"{getattr(self.mean, c):9.3f}" for c in COLUMNS))
        return "\n".join(lines) + "\n"


def rmse(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _gaussian(window: int, sigma: float) -> np.ndarray:
    x = np.arange(window) - (window - 1) / 2.0
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean SSIM over every fully-contained Gaussian-weighted window."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2 or min(a.shape) < window:
        raise ValueError(f"images must be 2-D and at least {window}x{window}, got {a.shape}")
    g = _gaussian(window, sigma)
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a ** 2
    var_b = _filter_valid(b * b, g) - mu_b ** 2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def detect_peaks(frame_db: np.ndarray, centers_hz: np.ndarray, floor_db: float = 30.0,
                 interpolate: bool = False) -> list[Peak]:
    """Local maxima of a dB frame within ``floor_db`` of the strongest one.

    A peak must be strictly above its left neighbour and above the first
    differing value to its right; a flat top reports its leftmost bin.
    Edge bins are never peaks. With ``interpolate`` the frequency comes from
    a parabola through the peak and its neighbours (fractional bin mapped
    linearly between centers).
    """
    x = np.asarray(frame_db, dtype=np.float64)
    n = x.size
    found = []
    i = 1
    while i < n - 1:
        if x[i] > x[i - 1]:
            j = i
            while j + 1 < n and x[j + 1] == x[i]:
                j += 1
            if j + 1 < n and x[j + 1] < x[i]:
                found.append(i)
            i = j + 1
        else:
            i += 1
    if not found:
        return []
    top = max(x[i] for i in found)
    peaks = []
    for i in found:
        if x[i] < top - floor_db:
            continue
        freq = float(centers_hz[i])
        if interpolate:
            denom = x[i - 1] - 2 * x[i] + x[i + 1]
            off = 0.0 if denom == 0 else 0.5 * (x[i - 1] - x[i + 1]) / denom
            side = centers_hz[i + 1] if off > 0 else centers_hz[i - 1]
            freq = float(centers_hz[i] + abs(off) * (side - centers_hz[i]))
        peaks.append(Peak(i, freq, float(x[i])))
    return peaks


def _admissible(o: Peak, g: Peak, tol: float) -> bool:
    return abs(g.freq - o.freq) <= tol * o.freq


def match_frequencies(orig: list[Peak], gen: list[Peak], tol: float = 0.03) -> list[tuple[Peak, Peak]]:
    """One-to-one matching of generated to original peaks.

    Pairs are admissible when ``|gen - orig| <= tol * orig``. Pairs are taken
    greedily by increasing relative distance; if that leaves an augmenting
    path (a greedy choice blocking two other matches) it is repaired, so the
    result always has maximum cardinality.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    cands = sorted(
        ((abs(g.freq - o.freq) / o.freq, i, j) for i, o in enumerate(orig) for j, g in enumerate(gen)
         if _admissible(o, g, tol)),
    )
    o_to_g: dict[int, int] = {}
    g_to_o: dict[int, int] = {}
    for _, i, j in cands:
        if i not in o_to_g and j not in g_to_o:
            o_to_g[i], g_to_o[j] = j, i

    adj = {i: [j for _, ii, j in cands if ii == i] for i in range(len(orig))}

    def augment(i, seen):
        for j in adj[i]:
            if j in seen:
                continue
            seen.add(j)
            if j not in g_to_o or augment(g_to_o[j], seen):
                o_to_g[i], g_to_o[j] = j, i
                return True
        return False

    for i in range(len(orig)):
        if i not in o_to_g:
            augment(i, set())
    return [(orig[i], gen[j]) for i, j in sorted(o_to_g.items())]


def prf_from_counts(identified: int, n_gen: int, n_orig: int) -> tuple[float, float, float]:
    """Precision, recall, F1 from match counts; ``F1 = 2 Id / (Gen + Orig)``."""
    precision = identified / n_gen if n_gen else 0.0
    recall = identified / n_orig if n_orig else 0.0
    f1 = 2 * identified / (n_gen + n_orig) if identified else 0.0
    return precision, recall, f1


def frame_prf(orig: list[Peak], gen: list[Peak], tol: float = 0.03) -> tuple[float, float, float] | None:
    """Per-frame (precision, recall, f1), or ``None`` if the original has no peaks."""
    if not orig:
        return None
    return prf_from_counts(len(match_frequencies(orig, gen, tol)), len(gen), len(orig))


def peak_scores(orig_db: np.ndarray, gen_db: np.ndarray, centers_hz: np.ndarray,
                floor_db: float = 30.0, tol: float = 0.03) -> tuple[float, float, float, int]:
    """Frame-averaged precision, recall and F1 over frames whose original has peaks."""
    scores = []
    for t in range(orig_db.shape[1]):
        s = frame_prf(detect_peaks(orig_db[:, t], centers_hz, floor_db),
                      detect_peaks(gen_db[:, t], centers_hz, floor_db), tol)
        if s is not None:
            scores.append(s)
    if not scores:
        return 0.0, 0.0, 0.0, 0
    p, r, f = np.mean(scores, axis=0)
    return float(p), float(r), float(f), len(scores)


def evaluate_pair(orig: LogMelSpec, gen_values: np.ndarray, stats: tuple[float, float],
                  centers_hz: np.ndarray, floor_db: float = 30.0, tol: float = 0.03) -> SampleMetrics:
    gen_values = np.asarray(gen_values)
    if gen_values.shape != orig.values.shape:
        raise ValueError(f"shape mismatch: {gen_values.shape} vs {orig.values.shape}")
    gen_db = denormalize(gen_values, stats)
    p, r, f, n = peak_scores(np.asarray(orig.db, dtype=np.float64), gen_db, centers_hz, floor_db, tol)
    return SampleMetrics(rmse(orig.values, gen_values), ssim(orig.values, gen_values), p, r, f, n)


def aggregate(samples: list[SampleMetrics], ids: list[str] | None = None) -> EvalReport:
    if not samples:
        raise ValueError("cannot aggregate an empty list of samples")
    ids = [f"sample_{i}" for i in range(len(samples))] if ids is None else list(ids)
    cols = {c: float(np.mean([getattr(s, c) for s in samples])) for c in COLUMNS}
    frames = int(round(np.mean([s.frames_scored for s in samples])))
    return EvalReport(list(zip(ids, samples)), SampleMetrics(**cols, frames_scored=frames))


def as_dict(m: SampleMetrics) -> dict:
    return asdict(m)
