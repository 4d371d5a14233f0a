"""WAV ingestion, corpus manifests and the on-disk spectrogram cache.

The manifest is a JSON file (``manifest.json`` in the cache directory)::

    {
      "version": 1,
      "root": "<absolute data dir>",
      "entries": [{"id": str, "path": str (relative to root), "tag": str, "duration": float}, ...],
      "dsp": {...DspConfig fields...},
      "dsp_fingerprint": str,
      "split_seed": int,
      "splits": {"train": [ids], "val": [ids], "test": [ids]},
      "norm_stats": [norm_min, norm_max]
    }

``dsp``, ``dsp_fingerprint``, ``split_seed``, ``splits`` and ``norm_stats``
appear once spectrograms have been cached. Each sample's cache file is an
SCAE container ``<cache>/spec/<safe id>.scae`` with entries ``values`` and
``db`` and meta ``{"id", "norm_min", "norm_max", "dsp_fingerprint"}``.
"""

from __future__ import annotations

import json
import os
import re
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import load_container, save_container
from .dsp import DspConfig, LogMelSpec, mel_db, mel_filterbank, normalize, normalize_stats
from .tensor import Xoshiro256

SAMPLE_RATE = 16000
CLIP_SAMPLES = 4 * SAMPLE_RATE
MANIFEST_NAME = "manifest.json"


class DatasetError(ValueError):
    pass


class WavFormatError(DatasetError):
    pass


class StaleCacheError(DatasetError):
    pass


# --------------------------------------------------------------------------- wav

def load_wav(path: str | os.PathLike, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Read a mono 16-bit PCM WAV as float64 samples scaled by 1/32768."""
    try:
        with wave.open(str(path), "rb") as w:
            channels, width, rate = w.getnchannels(), w.getsampwidth(), w.getframerate()
            if channels != 1:
                raise WavFormatError(f"{path}: channel count {channels}, expected mono (1)")
            if width != 2:
                raise WavFormatError(f"{path}: sample width {8 * width} bits, expected 16-bit PCM encoding")
            if rate != sample_rate:
                raise WavFormatError(f"{path}: sample rate {rate} Hz, expected {sample_rate} Hz")
            raw = w.readframes(w.getnframes())
    except wave.Error as exc:
        raise WavFormatError(f"{path}: unsupported encoding ({exc}); expected PCM") from exc
    except EOFError as exc:
        raise WavFormatError(f"{path}: truncated WAV file") from exc
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def write_wav(path: str | os.PathLike, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    """Write mono 16-bit PCM, clipping to [-1, 32767/32768]."""
    pcm = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())


def fit_length(samples: np.ndarray, n: int = CLIP_SAMPLES) -> np.ndarray:
    if samples.size >= n:
        return samples[:n]
    return np.concatenate([samples, np.zeros(n - samples.size)])


# ---------------------------------------------------------------------- manifest

@dataclass
class ManifestEntry:
    id: str
    path: str
    tag: str
    duration: float


@dataclass
class Manifest:
    root: str
    entries: list[ManifestEntry]
    dsp: dict | None = None
    dsp_fingerprint: str | None = None
    split_seed: int | None = None
    splits: dict[str, list[str]] | None = None
    norm_stats: tuple[float, float] | None = None
    version: int = field(default=1)

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    def entry(self, id_: str) -> ManifestEntry:
        for e in self.entries:
            if e.id == id_:
                return e
        raise KeyError(id_)

    def to_dict(self) -> dict:
        d = {"version": self.version, "root": self.root,
             "entries": [vars(e).copy() for e in self.entries]}
        for key in ("dsp", "dsp_fingerprint", "split_seed", "splits"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.norm_stats is not None:
            d["norm_stats"] = list(self.norm_stats)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        stats = d.get("norm_stats")
        return cls(
            root=d["root"],
            entries=[ManifestEntry(**e) for e in d["entries"]],
            dsp=d.get("dsp"),
            dsp_fingerprint=d.get("dsp_fingerprint"),
            split_seed=d.get("split_seed"),
            splits=d.get("splits"),
            norm_stats=None if stats is None else (float(stats[0]), float(stats[1])),
            version=d.get("version", 1),
        )

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Manifest":
        return cls.from_dict(json.loads(Path(path).read_text()))


def instrument_tag(filename: str) -> str:
    stem = Path(filename).stem
    return stem.split("_", 1)[0] if "_" in stem and stem.split("_", 1)[0] else "unknown"


def build_manifest(data_dir: str | os.PathLike) -> Manifest:
    root = Path(data_dir)
    if not root.is_dir():
        raise DatasetError(f"data directory not found: {root}")
    files = sorted((p for p in root.rglob("*") if p.is_file() and p.suffix.lower() == ".wav"),
                   key=lambda p: p.relative_to(root).as_posix())
    if not files:
        raise DatasetError(f"no .wav files found under {root}")
    stems = [p.stem for p in files]
    entries = []
    for p in files:
        rel = p.relative_to(root).as_posix()
        id_ = p.stem if stems.count(p.stem) == 1 else rel.rsplit(".", 1)[0]
        with wave.open(str(p), "rb") as w:
            duration = w.getnframes() / float(w.getframerate())
        entries.append(ManifestEntry(id_, rel, instrument_tag(p.name), duration))
    return Manifest(str(root.resolve()), entries)


def split_dataset(ids: list[str], ratios=(0.8, 0.1, 0.1), seed: int = 0) -> tuple[list[str], list[str], list[str]]:
    """Seeded shuffle into train/val/test; val and test sizes are floored."""
    if abs(sum(ratios) - 1.0) > 1e-9 or any(r < 0 for r in ratios):
        raise DatasetError(f"split ratios must be non-negative and sum to 1, got {ratios}")
    ids = list(ids)
    if len(ids) < 3:
        raise DatasetError(f"need at least 3 samples to split, got {len(ids)}")
    order = Xoshiro256(seed).jumped(1).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    n_val = int(np.floor(len(ids) * ratios[1] + 1e-9))
    n_test = int(np.floor(len(ids) * ratios[2] + 1e-9))
    n_train = len(ids) - n_val - n_test
    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]


# ------------------------------------------------------------------------- cache

def safe_name(id_: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "__", id_)


def cache_path(cache_dir: str | os.PathLike, id_: str) -> Path:
    return Path(cache_dir) / "spec" / f"{safe_name(id_)}.scae"


def cache_spectrograms(manifest: Manifest, cfg: DspConfig, cache_dir: str | os.PathLike,
                       split_seed: int = 0, ratios=(0.8, 0.1, 0.1)) -> tuple[Manifest, int]:
    """Compute, normalize and store every sample's log-mel spectrogram.

    Normalization stats come from the training split only. Returns the
    updated manifest (also written to ``cache_dir/manifest.json``) and the
    number of cache files written; an up-to-date cache writes nothing.
    """
    cache_dir = Path(cache_dir)
    manifest_path = cache_dir / MANIFEST_NAME
    fingerprint = cfg.fingerprint()
    if manifest_path.exists():
        old = Manifest.load(manifest_path)
        if old.dsp_fingerprint is not None:
            if old.dsp_fingerprint != fingerprint:
                raise StaleCacheError(
                    f"cache at {cache_dir} was built with DSP fingerprint {old.dsp_fingerprint}, "
                    f"config now gives {fingerprint}; delete the cache directory and rebuild")
            if old.split_seed != split_seed or old.ids != manifest.ids or old.root != manifest.root:
                raise StaleCacheError(
                    f"cache at {cache_dir} was built from a different corpus or split seed; "
                    f"delete the cache directory and rebuild")
            if all(cache_path(cache_dir, i).exists() for i in old.ids):
                return old, 0

    train, val, test = split_dataset(manifest.ids, ratios, split_seed)
    fb = mel_filterbank(cfg)
    dbs = {}
    for e in manifest.entries:
        signal = fit_length(load_wav(Path(manifest.root) / e.path, cfg.sample_rate), 4 * cfg.sample_rate)
        dbs[e.id] = mel_db(signal, cfg, fb)
    stats = normalize_stats(dbs[i] for i in train)
    (cache_dir / "spec").mkdir(parents=True, exist_ok=True)
    for id_, db in dbs.items():
        own = normalize_stats([db]) if cfg.per_sample_norm else stats
        values = normalize(db, own).astype(np.float32)
        meta = json.dumps({"id": id_, "norm_min": own[0], "norm_max": own[1], "dsp_fingerprint": fingerprint})
        save_container(cache_path(cache_dir, id_), [("values", values), ("db", db.astype(np.float32))], meta)
    out = Manifest(manifest.root, manifest.entries, cfg.to_dict(), fingerprint, split_seed,
                   {"train": train, "val": val, "test": test}, stats)
    out.save(manifest_path)
    return out, len(dbs)


def load_cached(cache_dir: str | os.PathLike, id_: str) -> LogMelSpec:
    entries, meta = load_container(cache_path(cache_dir, id_))
    arrays = dict(entries)
    m = json.loads(meta)
    return LogMelSpec(arrays["values"], arrays["db"], m["norm_min"], m["norm_max"])


def load_split(cache_dir: str | os.PathLike, manifest: Manifest, split: str) -> tuple[list[str], list[LogMelSpec]]:
    if manifest.splits is None or split not in manifest.splits:
        raise DatasetError(f"manifest has no split {split!r}")
    ids = manifest.splits[split]
    missing = [i for i in ids if not cache_path(cache_dir, i).exists()]
    if missing:
        raise DatasetError(f"missing cache files for split {split!r}: {missing[:3]}")
    return ids, [load_cached(cache_dir, i) for i in ids]


# ------------------------------------------------------------------- toy corpus

def synth_note(f0: float, partials, duration: float = 4.0, sample_rate: int = SAMPLE_RATE,
               attack: float = 0.02, decay: float = 1.5, peak: float = 0.5) -> np.ndarray:
    """Additive harmonic tone: partial k has frequency ``(k+1) f0`` and relative amplitude ``partials[k]``."""
    t = np.arange(int(duration * sample_rate)) / sample_rate
    tone = sum(a * np.sin(2 * np.pi * f0 * (k + 1) * t) for k, a in enumerate(partials) if a)
    env = np.minimum(t / attack, 1.0) * np.exp(-t / decay)
    tone = tone * env
    return peak * tone / np.max(np.abs(tone))


TOY_INSTRUMENTS = ("guitar", "bass", "brass", "flute", "organ", "reed", "string", "keyboard")


def make_toy_corpus(out_dir: str | os.PathLike, n: int = 8, f0: float = 440.0, seed: int = 0) -> list[Path]:
    """Write ``n`` four-second harmonic notes sharing one pitch but differing in timbre."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = Xoshiro256(seed)
    paths = []
    for i in range(n):
        n_partials = 3 + int(rng.random() * 6)
        rolloff = 0.4 + 0.5 * rng.random()
        partials = [rolloff ** k * (0.5 + 0.5 * rng.random()) for k in range(n_partials)]
        decay = 0.5 + 2.5 * rng.random()
        attack = 0.005 + 0.1 * rng.random()
        name = f"{TOY_INSTRUMENTS[i % len(TOY_INSTRUMENTS)]}_{i:03d}.wav"
        path = out / name
        write_wav(path, synth_note(f0, partials, attack=attack, decay=decay))
        paths.append(path)
    return paths
