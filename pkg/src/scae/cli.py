"""``scae`` command line: preprocess, train, eval, reconstruct, gradcheck.

Exit codes: 0 ok, 2 bad input or path, 3 training diverged, 4 DSP
fingerprint mismatch, 5 gradient check failure. Failures print a single
``error: <kind>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import dsp
from .config import RunConfig, load_run_config
from .container import ContainerError
from .dataset import (MANIFEST_NAME, DatasetError, Manifest, StaleCacheError, WavFormatError, build_manifest,
                      cache_spectrograms, fit_length, load_split, load_wav, make_toy_corpus, write_wav)
from .metrics import aggregate, evaluate_pair
from .model import ConfigError, DivergedError, build_model
from .presets import PRESETS, get_preset
from .tensor import Xoshiro256
from .train import (CheckpointError, evaluate_mse, load_checkpoint, save_checkpoint, save_training_state,
                    train)
from .verify import format_results, run_suite

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_FINGERPRINT, EXIT_GRADCHECK = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, kind: str, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.kind, self.code = kind, code


def _config(args) -> RunConfig:
    cfg = load_run_config(getattr(args, "config", None))
    preset = getattr(args, "preset", None)
    if preset:
        cfg = dataclasses.replace(cfg, preset=preset, model=get_preset(preset))
    overrides = {k: getattr(args, k, None) for k in ("max_epochs", "seed", "batch_size", "patience")}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        cfg = dataclasses.replace(cfg, train=dataclasses.replace(cfg.train, **overrides))
    return cfg


def _require_dir(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise CliError("path", f"{what} directory not found: {path}")
    return p


def _load_manifest(cache: Path) -> Manifest:
    path = cache / MANIFEST_NAME
    if not path.exists():
        raise CliError("path", f"no {MANIFEST_NAME} in {cache}; run `scae preprocess` first")
    manifest = Manifest.load(path)
    if manifest.norm_stats is None or manifest.splits is None:
        raise CliError("dataset", f"{path} is incomplete; rerun `scae preprocess`")
    return manifest


def _stack(specs) -> np.ndarray:
    return np.stack([s.values for s in specs]) if specs else np.empty((0,))


# ---------------------------------------------------------------------- commands

def cmd_preprocess(args) -> int:
    cfg = _config(args)
    data = _require_dir(args.data, "data")
    manifest = build_manifest(data)
    manifest, written = cache_spectrograms(manifest, cfg.dsp, args.cache, cfg.split.seed, cfg.split.ratios)
    if written == 0:
        print("0 cached (up to date)")
    else:
        sizes = "/".join(str(len(manifest.splits[k])) for k in ("train", "val", "test"))
        print(f"{written} cached, split {sizes}")
    lo, hi = manifest.norm_stats
    print(f"norm stats (train split): min {lo:.4f} dB, max {hi:.4f} dB; dsp fingerprint {manifest.dsp_fingerprint}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    cache = _require_dir(args.cache, "cache")
    manifest = _load_manifest(cache)
    _, train_specs = load_split(cache, manifest, "train")
    val_ids, val_specs = load_split(cache, manifest, "val")
    if not train_specs:
        raise CliError("dataset", "training split is empty")
    X, Xv = _stack(train_specs), _stack(val_specs) if val_specs else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    extra = {
        "dsp": cfg.dsp.to_dict() if manifest.dsp is None else manifest.dsp,
        "dsp_fingerprint": manifest.dsp_fingerprint,
        "norm_stats": list(manifest.norm_stats),
        "run_config": cfg.to_dict(),
    }
    input_shape = X.shape[1:]

    state = None
    if args.resume:
        ckpt = load_checkpoint(args.resume)
        if ckpt.meta.get("dsp_fingerprint") != manifest.dsp_fingerprint:
            raise CliError("fingerprint", f"{args.resume} was trained on a different DSP configuration",
                           EXIT_FINGERPRINT)
        model = ckpt.model
        state = ckpt.train_state(cfg.train)
        print(f"resuming from {args.resume} after epoch {ckpt.history.epochs}")
    else:
        model = build_model(cfg.model, cfg.train.seed, input_shape)

    on_epoch_end = None
    if args.target_rmse is not None:
        def on_epoch_end(epoch, m, history):
            mse = history.val_loss[-1] if Xv is None else evaluate_mse(m, X, cfg.train.batch_size)
            return math.sqrt(mse) < args.target_rmse

    log = None if args.quiet else (lambda line: print(line, flush=True))
    best_path = out / "best.scae"
    model, history, state = train(model, X, Xv, cfg.train, state=state, on_epoch_end=on_epoch_end,
                                  checkpoint_path=best_path, checkpoint_extra=extra, log=log)
    save_checkpoint(best_path, model, None, history, extra=extra)
    if not args.no_resume_state:
        save_training_state(out / "last.scae", model, state, extra)
    (out / "history.csv").write_text(history.to_csv())
    (out / "timings.csv").write_text(history.timing_csv())

    how = "early stop" if history.early_stopped else "stopped"
    print(f"{how} at epoch {history.stopped_epoch} (best {history.best_epoch})")
    print(f"train RMSE {math.sqrt(evaluate_mse(model, X, cfg.train.batch_size)):.6f}")
    print(f"wrote {best_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cache = _require_dir(args.cache, "cache")
    manifest = _load_manifest(cache)
    try:
        ids, specs = load_split(cache, manifest, args.split)
    except DatasetError as exc:
        raise CliError("path", str(exc)) from exc
    if not specs:
        raise CliError("dataset", f"split {args.split!r} is empty")
    cfg = _config(args)
    if args.oracle_copy:
        gens = [s.values for s in specs]
    else:
        if not args.checkpoint:
            raise CliError("usage", "--checkpoint is required unless --oracle-copy is given")
        ckpt = load_checkpoint(args.checkpoint)
        if ckpt.meta.get("dsp_fingerprint") != manifest.dsp_fingerprint:
            raise CliError("fingerprint",
                           f"checkpoint DSP fingerprint {ckpt.meta.get('dsp_fingerprint')} does not match "
                           f"cache fingerprint {manifest.dsp_fingerprint}", EXIT_FINGERPRINT)
        model = ckpt.model.eval()
        X = _stack(specs)
        gens = [g for i in range(0, len(X), 64) for g in model.reconstruct(X[i:i + 64])]
    dsp_cfg = dsp.DspConfig(**manifest.dsp)
    centers = dsp.mel_centers_hz(dsp_cfg)
    samples = [evaluate_pair(s, g, s.stats, centers, cfg.eval.floor_db, cfg.eval.tol)
               for s, g in zip(specs, gens)]
    report = aggregate(samples, ids)
    label = "oracle-copy" if args.oracle_copy else Path(args.checkpoint).stem
    text = report.to_text(label)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"eval_{args.split}.csv").write_text(report.to_csv())
    (out / f"eval_{args.split}.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def reconstruct_signal(ckpt, signal: np.ndarray, gl_iters: int = 60, seed: int = 0):
    """wav samples -> log-mel -> autoencoder -> Griffin-Lim; returns (signal, residuals, spec, gen)."""
    cfg = dsp.DspConfig(**ckpt.meta["dsp"])
    stats = None if cfg.per_sample_norm else tuple(ckpt.meta["norm_stats"])
    fb = dsp.mel_filterbank(cfg)
    n = len(signal)
    spec = dsp.log_mel_spectrogram(fit_length(signal, 4 * cfg.sample_rate), cfg, stats, fb)
    gen = ckpt.model.eval().reconstruct(spec.values)
    mag = dsp.mel_to_linear(dsp.db_to_amplitude(dsp.denormalize(gen, spec.stats)), fb)
    out, residuals = dsp.griffin_lim(mag, cfg, gl_iters, Xoshiro256(seed))
    return out[:n], residuals, spec, gen


def cmd_reconstruct(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    for key in ("dsp", "norm_stats"):
        if key not in ckpt.meta:
            raise CliError("checkpoint", f"{args.checkpoint} has no {key}; train it with `scae train`")
    signal = load_wav(args.inp, ckpt.meta["dsp"]["sample_rate"])
    out, residuals, _, _ = reconstruct_signal(ckpt, signal, args.gl_iters, args.seed)
    write_wav(args.out, np.clip(out, -1.0, 32767 / 32768))
    print(f"spectral convergence residual after {args.gl_iters} iterations: {residuals[-1]:.6f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = run_suite(args.eps, args.seed, None if args.full else 64)
    print(format_results(results, args.eps))
    failing = [r.name for r in results if not r.ok]
    if failing:
        raise CliError("gradcheck", f"failing layers: {', '.join(failing)}", EXIT_GRADCHECK)
    return EXIT_OK


def cmd_presets(args) -> int:
    base = PRESETS["no-reg"].to_dict()
    for name, cfg in PRESETS.items():
        diff = {k: v for k, v in cfg.to_dict().items() if v != base[k]}
        print(f"{name:<12} {json.dumps(diff) if diff else '(baseline)'}")
    return EXIT_OK


def cmd_toy_corpus(args) -> int:
    paths = make_toy_corpus(args.out, args.n, args.f0, args.seed)
    print(f"wrote {len(paths)} notes to {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scae", description=__doc__.splitlines()[0])
    p.add_argument("--print-config", action="store_true",
                   help="print the effective run configuration (defaults, --config, --preset) and exit")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", choices=sorted(PRESETS), metavar="NAME", help="named model configuration")
    sub = p.add_subparsers(dest="command")

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
        return sp

    sp = add("preprocess", cmd_preprocess, "build the manifest, split and cache spectrograms")
    sp.add_argument("--data", required=True)
    sp.add_argument("--cache", required=True)

    sp = add("train", cmd_train, "train an autoencoder on the cached train split")
    sp.add_argument("--cache", required=True)
    sp.add_argument("--out", required=True, help="checkpoint and history directory")
    sp.add_argument("--preset", choices=sorted(PRESETS), metavar="NAME", default=argparse.SUPPRESS)
    sp.add_argument("--resume", help="continue from a last.scae checkpoint")
    sp.add_argument("--max-epochs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--patience", type=int)
    sp.add_argument("--target-rmse", type=float, help="stop once eval-mode train RMSE drops below this")
    sp.add_argument("--no-resume-state", action="store_true", help="skip writing last.scae")
    sp.add_argument("--quiet", action="store_true")

    sp = add("eval", cmd_eval, "score reconstructions of a split")
    sp.add_argument("--cache", required=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--split", default="test", choices=["train", "val", "test"])
    sp.add_argument("--out", default="reports", help="report directory")
    sp.add_argument("--oracle-copy", action="store_true", help="score the originals against themselves")

    sp = add("reconstruct", cmd_reconstruct, "resynthesize a WAV through the autoencoder")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--in", dest="inp", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--gl-iters", type=int, default=60)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("gradcheck", cmd_gradcheck, "finite-difference check of every layer and the composite model")
    sp.add_argument("--eps", type=float, default=1e-5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--full", action="store_true", help="check every composite coordinate (slow)")

    add("presets", cmd_presets, "list experiment presets")

    sp = add("toy-corpus", cmd_toy_corpus, "write a synthetic corpus of harmonic notes")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int, default=8)
    sp.add_argument("--f0", type=float, default=440.0)
    sp.add_argument("--seed", type=int, default=0)
    return p


_ERRORS = [
    (StaleCacheError, "fingerprint", EXIT_FINGERPRINT),
    (WavFormatError, "format", EXIT_INPUT),
    (DatasetError, "dataset", EXIT_INPUT),
    (CheckpointError, "checkpoint", EXIT_INPUT),
    (ContainerError, "container", EXIT_INPUT),
    (DivergedError, "diverged", EXIT_DIVERGED),
    ((ConfigError, dsp.DspError), "config", EXIT_INPUT),
    (OSError, "path", EXIT_INPUT),
    (ValueError, "input", EXIT_INPUT),
]


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.print_config:
            print(json.dumps(_config(args).to_dict(), indent=2))
            return EXIT_OK
        if args.command is None:
            parser.print_help()
            return EXIT_INPUT
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:
        for types, kind, code in _ERRORS:
            if isinstance(exc, types):
                print(f"error: {kind}: {' '.join(str(exc).split())}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    sys.exit(main())
