"""Minimal numpy layer kernels, hinge loss and SGD."""

from .gradcheck import finite_diff_check, numeric_grad, relative_error
from .layers import (
    Affine, Conv2D, Dropout, Layer, Parameter, Pool, ReLU,
    affine_backward, affine_forward, col2im, conv2d_backward, conv2d_forward,
    conv2d_naive, conv_output_size, dropout_backward, dropout_forward, im2col,
    pool_backward, pool_forward, relu_backward, relu_forward,
)
from .losses import hinge_loss
from .optim import SGD

__all__ = [
    "Affine", "Conv2D", "Dropout", "Layer", "Parameter", "Pool", "ReLU", "SGD",
    "affine_backward", "affine_forward", "col2im", "conv2d_backward", "conv2d_forward",
    "conv2d_naive", "conv_output_size", "dropout_backward", "dropout_forward",
    "finite_diff_check", "hinge_loss", "im2col", "numeric_grad", "pool_backward",
    "pool_forward", "relative_error", "relu_backward", "relu_forward",
]
