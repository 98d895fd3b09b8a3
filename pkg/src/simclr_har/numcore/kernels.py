"""Forward and backward kernels for the layers used by the encoder and heads.

All arrays are plain ``numpy.ndarray``. Activations are laid out
``[batch, time, channels]`` for the convolutional stack and ``[batch, dim]``
for the dense layers. Kernels never mutate their inputs.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class DimensionError(ValueError):
    """Raised when tensor shapes are inconsistent with a kernel."""


class ParameterError(ValueError):
    """Raised when a scalar hyperparameter is out of its valid range."""


class DegenerateEmbeddingError(ValueError):
    """Raised when an embedding row has (numerically) zero norm."""


def _require_ndim(name, x, ndim):
    if x.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-D, got shape {x.shape}")


# --------------------------------------------------------------------------
# 1-D convolution (stride 1, valid padding)
# --------------------------------------------------------------------------

def _conv_shapes(x, kernel, bias=None):
    _require_ndim("input", x, 3)
    _require_ndim("kernel", kernel, 3)
    k, ch_in, ch_out = kernel.shape
    if x.shape[2] != ch_in:
        raise DimensionError(
            f"input has {x.shape[2]} channels but kernel expects {ch_in}")
    if x.shape[1] < k:
        raise DimensionError(
            f"input length {x.shape[1]} shorter than kernel size {k}")
    if bias is not None and bias.shape != (ch_out,):
        raise DimensionError(f"bias shape {bias.shape} != ({ch_out},)")
    return k, ch_in, ch_out


def _patches(x, k):
    # [B, T', C, k] -> [B, T', k, C] so the flattened patch order is (tau, i)
    win = sliding_window_view(x, k, axis=1)
    return win.transpose(0, 1, 3, 2)


def conv1d_forward(x, kernel, bias):
    """out[b, t, o] = bias[o] + sum_{tau, i} x[b, t + tau, i] * kernel[tau, i, o]."""
    k, ch_in, ch_out = _conv_shapes(x, kernel, bias)
    batch, t_out = x.shape[0], x.shape[1] - k + 1
    cols = _patches(x, k).reshape(batch * t_out, k * ch_in)
    out = cols @ kernel.reshape(k * ch_in, ch_out)
    out += bias
    return out.reshape(batch, t_out, ch_out)


def conv1d_backward(grad_out, x, kernel, need_input_grad=True):
    """Gradients of :func:`conv1d_forward` w.r.t. input, kernel and bias.

    ``grad_input`` is ``None`` when ``need_input_grad`` is false (first layer,
    or a layer whose input comes from frozen parameters).
    """
    k, ch_in, ch_out = _conv_shapes(x, kernel)
    batch, t_out = x.shape[0], x.shape[1] - k + 1
    if grad_out.shape != (batch, t_out, ch_out):
        raise DimensionError(
            f"grad_out shape {grad_out.shape} != {(batch, t_out, ch_out)}")
    g2 = grad_out.reshape(batch * t_out, ch_out)
    cols = _patches(x, k).reshape(batch * t_out, k * ch_in)
    grad_kernel = (cols.T @ g2).reshape(k, ch_in, ch_out)
    grad_bias = g2.sum(axis=0)
    grad_input = None
    if need_input_grad:
        gcols = (g2 @ kernel.reshape(k * ch_in, ch_out).T)
        gcols = gcols.reshape(batch, t_out, k, ch_in)
        grad_input = np.zeros_like(x)
        for tau in range(k):
            grad_input[:, tau:tau + t_out, :] += gcols[:, :, tau, :]
    return grad_input, grad_kernel, grad_bias


# --------------------------------------------------------------------------
# Pointwise / pooling
# --------------------------------------------------------------------------

def relu(x):
    return np.maximum(x, 0)


def relu_backward(grad_out, x):
    return np.where(x > 0, grad_out, 0).astype(grad_out.dtype, copy=False)


TRAIN = "train"
EVAL = "eval"


def dropout(x, rate, mode, rng):
    """Inverted dropout.

    Returns ``(output, mask)`` where ``mask`` already carries the
    ``1 / (1 - rate)`` scaling, so the backward pass is ``grad * mask``.
    ``mask`` is ``None`` when the layer is a no-op.
    """
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in (TRAIN, EVAL):
        raise ParameterError(f"unknown dropout mode {mode!r}")
    if mode == EVAL or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def dropout_backward(grad_out, mask):
    if mask is None:
        return grad_out
    return grad_out * mask


def global_max_pool1d(x):
    """Max over the time axis. Returns ``(pooled, argmax)``; ties go to the first index."""
    _require_ndim("input", x, 3)
    if x.shape[1] < 1:
        raise DimensionError("global max pooling over an empty time axis")
    idx = np.argmax(x, axis=1)
    pooled = np.take_along_axis(x, idx[:, None, :], axis=1)[:, 0, :]
    return pooled, idx


def global_max_pool1d_backward(grad_out, argmax, time_len):
    batch, ch = grad_out.shape
    grad = np.zeros((batch, time_len, ch), dtype=grad_out.dtype)
    np.put_along_axis(grad, argmax[:, None, :], grad_out[:, None, :], axis=1)
    return grad


# --------------------------------------------------------------------------
# Dense
# --------------------------------------------------------------------------

def dense(x, weight, bias):
    _require_ndim("input", x, 2)
    _require_ndim("weight", weight, 2)
    if x.shape[1] != weight.shape[0]:
        raise DimensionError(
            f"input dim {x.shape[1]} != weight rows {weight.shape[0]}")
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"bias shape {bias.shape} != ({weight.shape[1]},)")
    return x @ weight + bias


def dense_backward(grad_out, x, weight, need_input_grad=True):
    if grad_out.shape != (x.shape[0], weight.shape[1]):
        raise DimensionError(
            f"grad_out shape {grad_out.shape} != {(x.shape[0], weight.shape[1])}")
    grad_w = x.T @ grad_out
    grad_b = grad_out.sum(axis=0)
    grad_x = grad_out @ weight.T if need_input_grad else None
    return grad_x, grad_w, grad_b


# --------------------------------------------------------------------------
# Normalisation
# --------------------------------------------------------------------------

def l2_normalize(x, min_norm=1e-12):
    """Row-wise unit normalisation. Returns ``(normalized, norms)``."""
    _require_ndim("input", x, 2)
    norms = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
    if np.any(norms < min_norm):
        raise DegenerateEmbeddingError(
            f"{int(np.sum(norms < min_norm))} embedding row(s) have norm < {min_norm}")
    return x / norms, norms


def l2_normalize_backward(grad_out, normalized, norms):
    # d(x/|x|) = (g - y (y . g)) / |x|
    proj = np.sum(grad_out * normalized, axis=1, keepdims=True)
    return (grad_out - normalized * proj) / norms
