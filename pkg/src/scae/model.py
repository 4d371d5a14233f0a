"""Stacked convolutional autoencoder assembly.

The encoder is ``n_conv`` stride-2 convolutions with tanh, optional pooling
and an optional dense projection to the latent vector. The decoder mirrors
it: dense back, reshape, nearest-neighbour upsampling where the encoder
pooled, transposed convolutions, then a per-frame output activation over the
mel axis.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .nn import (
    AvgPool2D,
    Conv2D,
    Conv2DTranspose,
    Dense,
    Dropout,
    Flatten,
    MaxPool2D,
    RegSpec,
    Reshape,
    Sequential,
    Sigmoid,
    Softmax,
    Tanh,
    Upsample2D,
    mse_loss,
)
from .tensor import Xoshiro256

DEFAULT_INPUT_SHAPE = (128, 256)
PLACEMENTS = ("encoder", "decoder", "both")


class ConfigError(ValueError):
    pass


class DivergedError(ArithmeticError):
    """Raised when the training loss stops being finite."""


@dataclass(frozen=True)
class DropoutSpec:
    p: float = 0.3
    placement: str = "both"

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ConfigError(f"dropout p must be in [0, 1), got {self.p}")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"dropout placement must be one of {PLACEMENTS}")


@dataclass(frozen=True)
class RegPlacement:
    spec: RegSpec
    placement: str = "both"

    def __post_init__(self):
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"regularizer placement must be one of {PLACEMENTS}")


@dataclass(frozen=True)
class ModelConfig:
    n_conv: int = 3
    kernel: int = 4
    stride: int = 2
    filters: tuple[int, ...] = (16, 32, 64)
    pooling: str = "max"
    pooling_placement: str = "after_stack"
    latent_dim: int = 8192
    use_dense: bool = True
    output_activation: str = "softmax"
    dropout: DropoutSpec | None = None
    reg: tuple[RegPlacement, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "filters", tuple(int(f) for f in self.filters))
        object.__setattr__(self, "reg", tuple(self.reg))
        if len(self.filters) != self.n_conv:
            raise ConfigError(f"filters has {len(self.filters)} entries but n_conv={self.n_conv}")
        if self.pooling not in ("max", "avg", "none"):
            raise ConfigError(f"pooling must be max, avg or none, got {self.pooling!r}")
        if self.pooling_placement not in ("after_stack", "after_each"):
            raise ConfigError(f"pooling_placement must be after_stack or after_each")
        if self.pooling == "none" and self.pooling_placement == "after_each":
            raise ConfigError("pooling='none' cannot be placed after each layer")
        if self.output_activation not in ("softmax", "sigmoid"):
            raise ConfigError("output_activation must be softmax or sigmoid")
        if self.kernel < 1 or self.stride < 1 or self.latent_dim < 1:
            raise ConfigError("kernel, stride and latent_dim must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["filters"] = list(self.filters)
        d["reg"] = [dict(norm=r.spec.norm, lam=r.spec.lam, attach=r.spec.attach, placement=r.placement)
                    for r in self.reg]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        if d.get("dropout") is not None:
            d["dropout"] = DropoutSpec(**d["dropout"])
        if "reg" in d:
            regs = []
            for r in d["reg"]:
                r = dict(r)
                placement = r.pop("placement", "both")
                regs.append(RegPlacement(RegSpec(**r), placement))
            d["reg"] = tuple(regs)
        if "filters" in d:
            d["filters"] = tuple(d["filters"])
        return cls(**d)


def _in(part: str, placement: str) -> bool:
    return placement == "both" or placement == part


class AutoencoderModel:
    """Encoder/decoder pair operating on ``(B, n_mels, frames)`` batches."""

    def __init__(self, config: ModelConfig, encoder: Sequential, decoder: Sequential,
                 input_shape: tuple[int, int], dtype, dropout_rng: Xoshiro256):
        self.config = config
        self.encoder = encoder
        self.decoder = decoder
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        self.dropout_rng = dropout_rng
        self.mode = "train"
        self.penalty = 0.0

    # parameters -----------------------------------------------------------
    @property
    def params(self) -> dict[str, np.ndarray]:
        return {**{f"encoder.{k}": v for k, v in self.encoder.params.items()},
                **{f"decoder.{k}": v for k, v in self.decoder.params.items()}}

    @property
    def grads(self) -> dict[str, np.ndarray]:
        return {**{f"encoder.{k}": v for k, v in self.encoder.grads.items()},
                **{f"decoder.{k}": v for k, v in self.decoder.grads.items()}}

    def load_params(self, params: dict[str, np.ndarray]) -> None:
        own = self.params
        if set(own) != set(params):
            missing, extra = set(own) - set(params), set(params) - set(own)
            raise ConfigError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, v in params.items():
            if own[k].shape != v.shape:
                raise ConfigError(f"parameter {k}: shape {v.shape}, expected {own[k].shape}")
            own[k][...] = v

    @property
    def layers(self) -> list[Sequential]:
        return [self.encoder, self.decoder]

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    @property
    def latent_dim(self) -> int:
        return self.encoder.output_shape((1, *self.input_shape))[0]

    def _set_dropout_rng(self, rng: Xoshiro256) -> None:
        self.dropout_rng = rng
        for seq in (self.encoder, self.decoder):
            for layer in seq:
                if isinstance(layer, Dropout):
                    layer.rng = rng

    # modes ------------------------------------------------------------------
    def train(self) -> "AutoencoderModel":
        self.mode = "train"
        return self

    def eval(self) -> "AutoencoderModel":
        self.mode = "eval"
        return self

    # passes --------------------------------------------------------------
    def _as_batch(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        x = np.asarray(x)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != self.input_shape:
            raise ConfigError(f"expected input (B, {self.input_shape[0]}, {self.input_shape[1]}), got {x.shape}")
        return np.ascontiguousarray(x, dtype=self.dtype), single

    def encode(self, x: np.ndarray, training: bool | None = None) -> np.ndarray:
        xb, single = self._as_batch(x)
        if training is None:
            training = self.mode == "train"
        z = self.encoder.forward(xb[:, None], training)
        return z[0] if single else z

    def decode(self, z: np.ndarray, training: bool | None = None) -> np.ndarray:
        z = np.asarray(z, dtype=self.dtype)
        single = z.ndim == 1
        if single:
            z = z[None]
        if training is None:
            training = self.mode == "train"
        y = self.decoder.forward(z, training)[:, 0]
        return y[0] if single else y

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        xb, _ = self._as_batch(x)
        z = self.encoder.forward(xb[:, None], training)
        y = self.decoder.forward(z, training)[:, 0]
        self.penalty = self.encoder.penalty + self.decoder.penalty
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dz = self.decoder.backward(dy[:, None])
        return self.encoder.backward(dz)[:, 0]

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        """Deterministic (eval-mode) reconstruction."""
        xb, single = self._as_batch(x)
        y = self.forward(xb, training=False)
        return y[0] if single else y

    def forward_backward(self, batch: np.ndarray, targets: np.ndarray | None = None):
        """Loss (mse + penalties) and gradients for one mini-batch."""
        xb, _ = self._as_batch(batch)
        tb = xb if targets is None else self._as_batch(targets)[0]
        y = self.forward(xb, training=self.mode == "train")
        mse, dy = mse_loss(y, tb)
        loss = mse + self.penalty if self.penalty else mse
        if not np.isfinite(loss):
            raise DivergedError(f"non-finite loss {loss}")
        self.backward(dy)
        return loss, self.grads

    def to_meta(self) -> dict:
        return {"config": self.config.to_dict(), "input_shape": list(self.input_shape), "dtype": self.dtype.name}


def build_model(cfg: ModelConfig = ModelConfig(), rng: Xoshiro256 | int = 0,
                input_shape: tuple[int, int] = DEFAULT_INPUT_SHAPE, dtype=np.float32) -> AutoencoderModel:
    """Instantiate encoder/decoder layers for ``cfg``.

    Weights are Glorot-uniform from ``rng``; dropout draws use an independent
    stream split off the same seed, so configurations with and without
    dropout share initial weights.
    """
    rng = Xoshiro256(rng) if isinstance(rng, (int, np.integer)) else rng
    dropout_rng = rng.jumped(2)
    pool_cls = {"max": MaxPool2D, "avg": AvgPool2D}.get(cfg.pooling)
    drop = cfg.dropout if cfg.dropout is not None and cfg.dropout.p > 0 else None

    def regs_for(part):
        return [r.spec for r in cfg.reg if _in(part, r.placement)]

    enc_layers, enc_regs = [], {}
    shape = (1, *input_shape)
    conv_shapes = []  # per-conv (input shape, output shape)
    for i, f in enumerate(cfg.filters):
        conv = Conv2D(shape[0], f, cfg.kernel, cfg.stride, "same", rng=rng, dtype=dtype)
        out = conv.output_shape(shape)
        conv_shapes.append((shape, out))
        enc_regs[len(enc_layers)] = regs_for("encoder")
        enc_layers += [conv, Tanh()]
        if drop and _in("encoder", drop.placement):
            enc_layers.append(Dropout(drop.p, dropout_rng))
        shape = out
        if pool_cls and cfg.pooling_placement == "after_each":
            enc_layers.append(pool_cls(2))
            shape = enc_layers[-1].output_shape(shape)
    pre_pool = shape
    if pool_cls and cfg.pooling_placement == "after_stack":
        enc_layers.append(pool_cls(2))
        shape = enc_layers[-1].output_shape(shape)
    feature_shape = shape
    flat = int(np.prod(feature_shape))
    enc_layers.append(Flatten())
    if cfg.use_dense:
        if cfg.latent_dim > flat:
            raise ConfigError(f"latent_dim {cfg.latent_dim} exceeds the encoder feature size {flat}")
        enc_regs[len(enc_layers)] = regs_for("encoder")
        enc_layers.append(Dense(flat, cfg.latent_dim, rng=rng, dtype=dtype))

    dec_layers, dec_regs = [], {}

    def dec_activation():
        dec_layers.append(Tanh())
        if drop and _in("decoder", drop.placement):
            dec_layers.append(Dropout(drop.p, dropout_rng))

    if cfg.use_dense:
        dec_regs[len(dec_layers)] = regs_for("decoder")
        dec_layers.append(Dense(cfg.latent_dim, flat, rng=rng, dtype=dtype))
    dec_layers.append(Reshape(feature_shape))
    if pool_cls and cfg.pooling_placement == "after_stack":
        dec_layers.append(Upsample2D(2, pre_pool[1:]))
    for i in range(cfg.n_conv - 1, -1, -1):
        conv_in, conv_out = conv_shapes[i]
        if pool_cls and cfg.pooling_placement == "after_each":
            dec_layers.append(Upsample2D(2, conv_out[1:]))
        dec_regs[len(dec_layers)] = regs_for("decoder")
        dec_layers.append(Conv2DTranspose(conv_out[0], conv_in[0], cfg.kernel, cfg.stride, "same",
                                          rng=rng, dtype=dtype))
        if i > 0:
            dec_activation()
    dec_layers.append(Softmax(axis=2) if cfg.output_activation == "softmax" else Sigmoid())

    encoder = Sequential(enc_layers, enc_regs)
    decoder = Sequential(dec_layers, dec_regs)
    out_shape = decoder.output_shape(encoder.output_shape((1, *input_shape)))
    if out_shape != (1, *input_shape):
        raise ConfigError(f"decoder output {out_shape} does not mirror input {(1, *input_shape)}; "
                          f"input dims must be divisible by the total downsampling")
    return AutoencoderModel(cfg, encoder, decoder, input_shape, dtype, dropout_rng)


def model_from_meta(meta: dict, params: dict[str, np.ndarray] | None = None) -> AutoencoderModel:
    model = build_model(ModelConfig.from_dict(meta["config"]), 0, tuple(meta["input_shape"]),
                        np.dtype(meta.get("dtype", "float32")))
    if params is not None:
        model.load_params(params)
    return model
