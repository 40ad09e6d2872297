"""Hand-rolled neural-network stack with swappable convolution kernels."""

from .backend import active_backend
from .modules import (Attention, AttentionBlock2d, AvgPool2, Conv2d, GroupNorm,
                      Linear, Module, Param, SiLU, TimeEmbedding, UpNearest2,
                      sinusoidal_embedding)
from .optim import Adam

__all__ = [
    "Adam", "Attention", "AttentionBlock2d", "AvgPool2", "Conv2d", "GroupNorm",
    "Linear", "Module", "Param", "SiLU", "TimeEmbedding", "UpNearest2",
    "active_backend", "sinusoidal_embedding",
]
