"""scikit-learn style wrappers around the spectrogram front end and the autoencoder.

>>> from scae.estimators import LogMelSpectrogram, ConvAutoencoder
>>> spec = LogMelSpectrogram().fit(train_signals)          # doctest: +SKIP
>>> ae = ConvAutoencoder(max_epochs=50).fit(spec.transform(train_signals))  # doctest: +SKIP
>>> ae.score(spec.transform(test_signals))                 # doctest: +SKIP
"""

from __future__ import annotations

import dataclasses

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import dsp
from .metrics import rmse
from .model import DropoutSpec, ModelConfig, RegPlacement, build_model
from .tensor import Xoshiro256
from .train import TrainConfig, train
from .validation import check_latents, check_signals, check_spectrograms, check_unit_range


class LogMelSpectrogram(TransformerMixin, BaseEstimator):
    """Signals ``(n, samples)`` to normalized log-mel spectrograms ``(n, n_mels, frames)``.

    ``fit`` learns the corpus min/max dB used for normalization;
    ``inverse_transform`` resynthesizes audio with Griffin-Lim.
    """

    def __init__(self, sample_rate=16000, window_len=690, fft_size=1024, hop=250, n_mels=128,
                 fmin=0.0, fmax=8000.0, target_frames=256, db_floor=-100.0, gl_iters=60, seed=0):
        self.sample_rate = sample_rate
        self.window_len = window_len
        self.fft_size = fft_size
        self.hop = hop
        self.n_mels = n_mels
        self.fmin = fmin
        self.fmax = fmax
        self.target_frames = target_frames
        self.db_floor = db_floor
        self.gl_iters = gl_iters
        self.seed = seed

    def _config(self) -> dsp.DspConfig:
        names = {f.name for f in dataclasses.fields(dsp.DspConfig)}
        return dsp.DspConfig(**{k: v for k, v in self.get_params().items() if k in names})

    def fit(self, X, y=None):
        X = check_signals(X)
        cfg = self._config()
        fb = dsp.mel_filterbank(cfg)
        self.config_ = cfg
        self.filterbank_ = fb
        self.norm_stats_ = dsp.normalize_stats(dsp.mel_db(x, cfg, fb) for x in X)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "norm_stats_")
        X = check_signals(X)
        return np.stack([dsp.log_mel_spectrogram(x, self.config_, self.norm_stats_, self.filterbank_).values
                         for x in X])

    def inverse_transform(self, V) -> np.ndarray:
        """Spectrogram values back to waveforms (phase estimated by Griffin-Lim), ``n_features_in_`` long."""
        check_is_fitted(self, "norm_stats_")
        V = check_unit_range(check_spectrograms(V, (self.n_mels, self.target_frames)))
        out = []
        for v in V:
            mag = dsp.mel_to_linear(dsp.db_to_amplitude(dsp.denormalize(v, self.norm_stats_)), self.filterbank_)
            x, _ = dsp.griffin_lim(mag, self.config_, self.gl_iters, Xoshiro256(self.seed))
            out.append(x[:self.n_features_in_])
        return np.stack(out)


class ConvAutoencoder(TransformerMixin, BaseEstimator):
    """Stacked convolutional autoencoder over ``(n, n_mels, frames)`` spectrograms.

    ``transform`` encodes to latent vectors, ``inverse_transform`` decodes
    them, ``predict`` reconstructs and ``score`` is the negative RMSE.
    Model and training hyperparameters are constructor arguments; a full
    :class:`ModelConfig` may be passed as ``model_config`` instead.
    """

    def __init__(self, n_conv=3, kernel=4, stride=2, filters=(16, 32, 64), pooling="max",
                 pooling_placement="after_stack", latent_dim=8192, use_dense=True,
                 output_activation="softmax", dropout=None, dropout_placement="both", reg=(),
                 batch_size=64, lr=0.001, max_epochs=300, patience=10, seed=0, shuffle=True,
                 model_config: ModelConfig | None = None, verbose=False):
        self.n_conv = n_conv
        self.kernel = kernel
        self.stride = stride
        self.filters = filters
        self.pooling = pooling
        self.pooling_placement = pooling_placement
        self.latent_dim = latent_dim
        self.use_dense = use_dense
        self.output_activation = output_activation
        self.dropout = dropout
        self.dropout_placement = dropout_placement
        self.reg = reg
        self.batch_size = batch_size
        self.lr = lr
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed
        self.shuffle = shuffle
        self.model_config = model_config
        self.verbose = verbose

    def _model_config(self) -> ModelConfig:
        if self.model_config is not None:
            return self.model_config
        reg = tuple(r if isinstance(r, RegPlacement) else RegPlacement(*r) for r in self.reg)
        drop = None if not self.dropout else DropoutSpec(self.dropout, self.dropout_placement)
        return ModelConfig(self.n_conv, self.kernel, self.stride, tuple(self.filters), self.pooling,
                           self.pooling_placement, self.latent_dim, self.use_dense,
                           self.output_activation, drop, reg)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(self.batch_size, self.lr, self.max_epochs, self.patience, self.seed, self.shuffle)

    def fit(self, X, y=None, X_val=None):
        """Train on ``X``; early stopping watches ``X_val`` (or ``X`` if omitted)."""
        X = check_unit_range(check_spectrograms(X))
        if X_val is not None:
            X_val = check_unit_range(check_spectrograms(X_val, X.shape[1:]))
        model = build_model(self._model_config(), self.seed, X.shape[1:], np.float32)
        model, history, _ = train(model, X.astype(np.float32), X_val, self._train_config(),
                                  log=print if self.verbose else None)
        self.model_ = model.eval()
        self.history_ = history
        self.input_shape_ = X.shape[1:]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = check_spectrograms(X, self.input_shape_)
        return self.model_.encode(X, training=False)

    def inverse_transform(self, Z) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.decode(check_latents(Z, self.model_.latent_dim), training=False)

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.model_.reconstruct(check_spectrograms(X, self.input_shape_))

    def score(self, X, y=None) -> float:
        X = check_spectrograms(X, getattr(self, "input_shape_", None))
        return -rmse(X, self.predict(X))
