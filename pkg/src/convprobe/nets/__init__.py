from .kernels import (
    conv1d,
    conv1d_transposed,
    dense,
    grad,
    leaky_relu,
    phase_shuffle,
    same_pad,
)
from .models import (
    NetConfig,
    QNetOutput,
    discriminator_forward,
    generator_forward,
    init_params,
    load_checkpoint,
    q_network_forward,
    save_checkpoint,
)

__all__ = [
    "conv1d",
    "conv1d_transposed",
    "dense",
    "grad",
    "leaky_relu",
    "phase_shuffle",
    "same_pad",
    "NetConfig",
    "QNetOutput",
    "discriminator_forward",
    "generator_forward",
    "init_params",
    "load_checkpoint",
    "q_network_forward",
    "save_checkpoint",
]
