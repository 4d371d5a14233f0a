from __future__ import annotations

import numpy as np

from .layers import Layer
from .losses import RegSpec, reg_penalty

_TARGETS = {"kernel": "W", "bias": "b"}


class Sequential(Layer):
    """Ordered layer stack with optional per-layer regularizers.

    ``regularizers`` maps a layer index to the specs attached to it. After
    ``forward`` the summed penalty is in ``self.penalty``; ``backward`` adds
    the kernel/bias penalty gradients to the parameter grads and injects
    activity-penalty gradients at the regularized layer outputs.
    """

    kind = "sequential"

    def __init__(self, layers: list[Layer], regularizers: dict[int, list[RegSpec]] | None = None):
        self.layers = list(layers)
        self.penalty = 0.0
        self.regularizers = {i: list(specs) for i, specs in (regularizers or {}).items() if specs}

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": p for i, layer in enumerate(self.layers) for k, p in layer.params.items()}

    @property
    def grads(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": g for i, layer in enumerate(self.layers) for k, g in layer.grads.items()}

    def output_shape(self, shape):
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    def forward(self, x, training=False):
        self.penalty = 0.0
        self._activity_grads = {}
        for i, layer in enumerate(self.layers):
            x = layer.forward(x, training)
            for spec in self.regularizers.get(i, ()):
                if spec.lam == 0:
                    continue
                if spec.attach == "activity":
                    value, grad = reg_penalty(spec, x)
                    prev = self._activity_grads.get(i)
                    self._activity_grads[i] = grad if prev is None else prev + grad
                else:
                    value, _ = reg_penalty(spec, layer.params[_TARGETS[spec.attach]])
                self.penalty += value
        return x

    def backward(self, dy):
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            extra = self._activity_grads.get(i)
            if extra is not None:
                dy = dy + extra
            dy = layer.backward(dy)
            for spec in self.regularizers.get(i, ()):
                if spec.lam == 0 or spec.attach == "activity":
                    continue
                key = _TARGETS[spec.attach]
                _, grad = reg_penalty(spec, layer.params[key])
                layer.grads[key] += grad
        return dy

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]
