"""Desk-scale lab for backdoor attacks against autoencoders and GANs."""

__version__ = "0.1.0"

from .kernels import KERNEL_BACKEND
from .tensor import Tensor, backward

__all__ = ["KERNEL_BACKEND", "Tensor", "backward", "__version__"]
