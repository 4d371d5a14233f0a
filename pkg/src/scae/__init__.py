"""Log-mel spectrogram compression with a stacked convolutional autoencoder."""

from .dsp import DspConfig, LogMelSpec, griffin_lim, log_mel_spectrogram
from .estimators import ConvAutoencoder, LogMelSpectrogram
from .metrics import EvalReport, SampleMetrics, evaluate_pair
from .model import AutoencoderModel, ModelConfig, build_model
from .presets import PRESETS, get_preset
from .train import TrainConfig, TrainHistory, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "AutoencoderModel", "ConvAutoencoder", "DspConfig", "EvalReport", "LogMelSpec", "LogMelSpectrogram",
    "ModelConfig", "PRESETS", "SampleMetrics", "TrainConfig", "TrainHistory", "build_model",
    "evaluate_pair", "get_preset", "griffin_lim", "load_checkpoint", "log_mel_spectrogram",
    "save_checkpoint", "train",
]
