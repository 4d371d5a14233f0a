"""Mini-batch Adam training with early stopping, and checkpoint files."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .container import ContainerError, load_container, save_container
from .model import AutoencoderModel, DivergedError, model_from_meta
from .nn import Adam, mse_loss
from .tensor import Xoshiro256

CHECKPOINT_KIND = "scae-checkpoint"


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    lr: float = 0.001
    max_epochs: int = 300
    patience: int | None = 10
    seed: int = 0
    shuffle: bool = True
    min_delta: float = 1e-6

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 (or None to disable early stopping)")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    stopped_epoch: int | None = None
    early_stopped: bool = False

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    @property
    def best_val(self) -> float:
        return self.val_loss[self.best_epoch - 1] if self.best_epoch else float("inf")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainHistory":
        return cls(**d)

    def to_csv(self) -> str:
        """``epoch,train_loss,val_loss``; deterministic for a fixed seed."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for i, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), start=1):
            w.writerow([i, repr(float(tr)), repr(float(va))])
        return buf.getvalue()

    def timing_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "seconds"])
        for i, s in enumerate(self.seconds, start=1):
            w.writerow([i, f"{s:.3f}"])
        return buf.getvalue()


class EarlyStopping:
    """Stop once ``patience`` consecutive epochs fail to beat the best by ``min_delta``."""

    def __init__(self, patience: int | None = 10, min_delta: float = 1e-6):
        self.patience = patience
        self.min_delta = min_delta
        self.best = float("inf")
        self.best_epoch: int | None = None
        self.wait = 0

    def update(self, epoch: int, val_loss: float) -> tuple[bool, bool]:
        """Record an epoch; returns ``(improved, should_stop)``."""
        improved = val_loss < self.best - self.min_delta
        if improved:
            self.best, self.best_epoch, self.wait = val_loss, epoch, 0
        else:
            self.wait += 1
        return improved, self.patience is not None and self.wait >= self.patience


def rng_streams(seed: int) -> dict[str, Xoshiro256]:
    """Independent init / shuffle / dropout streams derived from one seed."""
    root = Xoshiro256(seed)
    return {"init": root, "shuffle": root.jumped(1), "dropout": root.jumped(2)}


def evaluate_mse(model: AutoencoderModel, X: np.ndarray, batch_size: int = 64) -> float:
    """Eval-mode reconstruction MSE over ``X``, weighting every element equally."""
    total, count = 0.0, 0
    for start in range(0, len(X), batch_size):
        xb = X[start:start + batch_size]
        loss, _ = mse_loss(model.forward(xb, training=False), np.asarray(xb, dtype=model.dtype))
        total += loss * xb.size
        count += xb.size
    return total / count


@dataclass
class TrainState:
    """Everything needed to continue a run exactly where it stopped.

    After :func:`train` returns, the model holds the best weights and
    ``final_params`` the last epoch's weights, or ``None`` when those are
    the best ones. ``best_params`` is only an input, for resuming from a
    checkpoint whose stored weights are the final ones.
    """

    optimizer: Adam
    history: TrainHistory
    shuffle_rng: Xoshiro256
    best_params: dict[str, np.ndarray] | None = None
    final_params: dict[str, np.ndarray] | None = None


def train(
    model: AutoencoderModel,
    train_X: np.ndarray,
    val_X: np.ndarray | None,
    cfg: TrainConfig = TrainConfig(),
    *,
    state: TrainState | None = None,
    val_loss_fn: Callable[[AutoencoderModel], float] | None = None,
    on_epoch_end: Callable[[int, AutoencoderModel, TrainHistory], bool | None] | None = None,
    checkpoint_path: str | os.PathLike | None = None,
    checkpoint_extra: dict | None = None,
    log: Callable[[str], None] | None = None,
) -> tuple[AutoencoderModel, TrainHistory, TrainState]:
    """Train until ``max_epochs`` or early stopping, then restore the best epoch.

    The stopping metric is plain validation MSE (penalties excluded). With
    an empty validation set the training set's eval-mode MSE is used.
    ``val_loss_fn`` overrides the metric; ``on_epoch_end`` may return True to
    stop. On divergence the best parameters so far are written to
    ``checkpoint_path`` (if given) and :class:`DivergedError` is raised.
    """
    train_X = np.asarray(train_X)
    if len(train_X) == 0:
        raise ValueError("training split is empty")
    if val_X is None or len(val_X) == 0:
        val_X = train_X
    if state is None:
        state = TrainState(Adam(cfg.lr), TrainHistory(), rng_streams(cfg.seed)["shuffle"])
    opt, history = state.optimizer, state.history
    stopper = EarlyStopping(cfg.patience, cfg.min_delta)
    for epoch, v in enumerate(history.val_loss, start=1):
        stopper.update(epoch, v)
    best_params = state.best_params
    if history.best_epoch is not None and history.best_epoch == history.epochs:
        best_params = model.snapshot()
    if stopper.patience is not None and stopper.wait >= stopper.patience:
        history.early_stopped = True
    model.train()
    n = len(train_X)
    while history.epochs < cfg.max_epochs and not history.early_stopped:
        epoch = history.epochs + 1
        t0 = time.perf_counter()
        order = state.shuffle_rng.permutation(n) if cfg.shuffle else np.arange(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb = train_X[idx]
            try:
                loss, grads = model.forward_backward(xb)
            except DivergedError as exc:
                path = _save_last_good(model, best_params, history, checkpoint_path, checkpoint_extra)
                raise DivergedError(f"epoch {epoch}: {exc}; {_last_good_note(path)}") from exc
            opt.step(model.params, grads)
            total += loss * len(idx)
        train_loss = total / n
        val_loss = val_loss_fn(model) if val_loss_fn is not None else evaluate_mse(model, val_X, cfg.batch_size)
        if not np.isfinite(val_loss):
            path = _save_last_good(model, best_params, history, checkpoint_path, checkpoint_extra)
            raise DivergedError(f"epoch {epoch}: non-finite validation loss; {_last_good_note(path)}")
        history.train_loss.append(float(train_loss))
        history.val_loss.append(float(val_loss))
        history.seconds.append(time.perf_counter() - t0)
        improved, stop = stopper.update(epoch, val_loss)
        if improved:
            if best_params is None:
                best_params = model.snapshot()
            else:
                for k, v in model.params.items():
                    np.copyto(best_params[k], v)
            history.best_epoch = epoch
        if log is not None:
            log(f"epoch {epoch}: train {train_loss:.6f} val {val_loss:.6f}{' *' if improved else ''}")
        if on_epoch_end is not None and on_epoch_end(epoch, model, history):
            stop = True
        if stop:
            history.early_stopped = stopper.patience is not None and stopper.wait >= stopper.patience
            history.stopped_epoch = epoch
            break
    else:
        history.stopped_epoch = history.epochs
    state.best_params = None
    state.final_params = None
    if best_params is not None and history.best_epoch != history.epochs:
        # swap tensor by tensor so the model ends up with the best weights
        # without holding a third full copy of the parameters
        for k, v in model.params.items():
            tmp = v.copy()
            np.copyto(v, best_params[k])
            np.copyto(best_params[k], tmp)
        state.final_params = best_params
    return model, history, state


def _last_good_note(path: str | None) -> str:
    return f"last good checkpoint: {path}" if path else "no good epoch to checkpoint"


def _save_last_good(model, best_params, history, path, extra) -> str | None:
    if path is None or best_params is None:
        return None
    current = model.snapshot()
    model.load_params(best_params)
    save_checkpoint(path, model, None, history, extra=extra)
    model.load_params(current)
    return str(path)


# ---------------------------------------------------------------------- checkpoints

@dataclass
class Checkpoint:
    model: AutoencoderModel
    optimizer: Adam | None
    history: TrainHistory
    meta: dict
    shuffle_rng: Xoshiro256 | None = None
    best_params: dict[str, np.ndarray] | None = None

    def train_state(self, cfg: TrainConfig) -> TrainState:
        opt = self.optimizer if self.optimizer is not None else Adam(cfg.lr)
        rng = self.shuffle_rng if self.shuffle_rng is not None else rng_streams(cfg.seed)["shuffle"]
        return TrainState(opt, self.history, rng, self.best_params)


def save_checkpoint(path: str | os.PathLike, model: AutoencoderModel, optimizer: Adam | None,
                    history: TrainHistory, *, params: dict[str, np.ndarray] | None = None,
                    shuffle_rng: Xoshiro256 | None = None,
                    best_params: dict[str, np.ndarray] | None = None, extra: dict | None = None) -> None:
    """Write model parameters, optimizer moments, history and RNG positions.

    ``params`` replaces the model's own weights in the file (same names and shapes).
    """
    params = model.params if params is None else params
    entries = [(f"param/{k}", v) for k, v in params.items()]
    if optimizer is not None:
        entries += [(f"adam.m/{k}", v) for k, v in optimizer.m.items()]
        entries += [(f"adam.v/{k}", v) for k, v in optimizer.v.items()]
    if best_params is not None:
        entries += [(f"best/{k}", v) for k, v in best_params.items()]
    meta = {
        "kind": CHECKPOINT_KIND,
        "model": model.to_meta(),
        "optimizer": None if optimizer is None else optimizer.state_dict(),
        "history": history.to_dict(),
        "rng": {
            "dropout": model.dropout_rng.state,
            "shuffle": None if shuffle_rng is None else shuffle_rng.state,
        },
        **(extra or {}),
    }
    save_container(path, entries, json.dumps(meta, sort_keys=True))


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    try:
        entries, meta_text = load_container(path)
    except (OSError, ContainerError) as exc:
        raise CheckpointError(f"cannot load checkpoint {path}: {exc}") from exc
    meta = json.loads(meta_text)
    if meta.get("kind") != CHECKPOINT_KIND:
        raise CheckpointError(f"{path} is not a model checkpoint")
    groups: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam.m": {}, "adam.v": {}, "best": {}}
    for name, arr in entries:
        prefix, _, key = name.partition("/")
        if prefix not in groups:
            raise CheckpointError(f"unexpected entry {name!r} in {path}")
        groups[prefix][key] = arr
    model = model_from_meta(meta["model"], groups["param"])
    model._set_dropout_rng(Xoshiro256.from_state(meta["rng"]["dropout"]))
    optimizer = None
    if meta.get("optimizer") is not None:
        optimizer = Adam()
        optimizer.load_state(meta["optimizer"], groups["adam.m"], groups["adam.v"])
    shuffle = meta["rng"].get("shuffle")
    return Checkpoint(
        model=model,
        optimizer=optimizer,
        history=TrainHistory.from_dict(meta["history"]),
        meta=meta,
        shuffle_rng=None if shuffle is None else Xoshiro256.from_state(shuffle),
        best_params=groups["best"] or None,
    )


def save_training_state(path: str | os.PathLike, model: AutoencoderModel, state: TrainState,
                        extra: dict | None = None) -> None:
    """Resumable checkpoint: final-epoch weights plus the best-epoch weights (if different)."""
    if state.final_params is None:
        save_checkpoint(path, model, state.optimizer, state.history, shuffle_rng=state.shuffle_rng, extra=extra)
    else:
        save_checkpoint(path, model, state.optimizer, state.history, params=state.final_params,
                        shuffle_rng=state.shuffle_rng, best_params=model.params, extra=extra)
