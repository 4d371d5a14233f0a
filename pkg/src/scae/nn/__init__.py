from .gradcheck import GradcheckError, gradcheck, gradcheck_detail, gradcheck_function
from .layers import (
    AvgPool2D,
    Conv2D,
    Conv2DTranspose,
    Dense,
    Dropout,
    Flatten,
    Layer,
    LayerError,
    MaxPool2D,
    Reshape,
    Sigmoid,
    Softmax,
    Tanh,
    Upsample2D,
    same_padding,
)
from .losses import RegSpec, mse_loss, reg_penalty
from .optim import Adam
from .sequential import Sequential
