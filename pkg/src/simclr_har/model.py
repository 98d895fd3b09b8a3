"""Convolutional base encoder, projection head and classifier heads.

Parameters live in a flat ``dict`` of named numpy arrays using the stable
names ``encoder.conv{1,2,3}.{weight,bias}``, ``proj.fc{1,2,3}.{weight,bias}``,
``head.linear.{weight,bias}`` and ``head.ft{1,2}.{weight,bias}``. Every
forward function returns ``(output, cache)``; the matching ``*_backward``
consumes the cache and returns gradients keyed by parameter name.
"""

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .numcore.kernels import DimensionError

LINEAR = "linear"
FINETUNE = "finetune"


@dataclass(frozen=True)
class EncoderConfig:
    kernel_sizes: tuple = (24, 16, 8)
    filters: tuple = (32, 64, 96)
    dropout: float = 0.1
    input_length: int = 400
    channels: int = 3
    proj_units: tuple = (256, 128, 50)
    ft_hidden: int = 1024
    n_classes: int = 6

    @property
    def embed_dim(self):
        return self.filters[-1]


def conv_names(layer):
    return f"encoder.conv{layer}.weight", f"encoder.conv{layer}.bias"


def _glorot(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_params(config=EncoderConfig(), seed=0, dtype=np.float32):
    """Glorot-uniform weights and zero biases for every layer, seeded."""
    rng = np.random.default_rng(seed)
    params = {}
    ch = config.channels
    for i, (k, f) in enumerate(zip(config.kernel_sizes, config.filters), 1):
        w, b = conv_names(i)
        params[w] = _glorot(rng, (k, ch, f), k * ch, k * f, dtype)
        params[b] = np.zeros(f, dtype=dtype)
        ch = f

    def add_dense(prefix, d_in, d_out):
        params[f"{prefix}.weight"] = _glorot(rng, (d_in, d_out), d_in, d_out, dtype)
        params[f"{prefix}.bias"] = np.zeros(d_out, dtype=dtype)

    d = config.embed_dim
    for i, units in enumerate(config.proj_units, 1):
        add_dense(f"proj.fc{i}", d, units)
        d = units
    add_dense("head.linear", config.embed_dim, config.n_classes)
    add_dense("head.ft1", config.embed_dim, config.ft_hidden)
    add_dense("head.ft2", config.ft_hidden, config.n_classes)
    return params


def param_count(params, prefix=""):
    return sum(int(v.size) for k, v in params.items() if k.startswith(prefix))


def copy_params(params):
    return {k: v.copy() for k, v in params.items()}


# --------------------------------------------------------------------------
# Encoder
# --------------------------------------------------------------------------

def encode(params, x, mode=nc.EVAL, rng=None, config=EncoderConfig(), start_layer=1):
    """Conv -> ReLU -> dropout (x3) -> global max pool.

    With ``start_layer > 1``, ``x`` is taken to be the (pre-dropout) output
    of layer ``start_layer - 1``; used to skip a frozen prefix.
    """
    n_layers = len(config.kernel_sizes)
    if start_layer == 1:
        expected = (config.input_length, config.channels)
        if x.ndim != 3 or x.shape[1:] != expected:
            raise DimensionError(f"encoder input must be [B, {expected[0]}, {expected[1]}], got {x.shape}")
    if mode == nc.TRAIN and config.dropout > 0 and rng is None:
        raise ValueError("TRAIN mode with dropout needs an rng")
    a = x
    if start_layer > 1:
        a, _ = nc.dropout(a, config.dropout, mode, rng)
    layers = []
    for layer in range(start_layer, n_layers + 1):
        w, b = conv_names(layer)
        pre = nc.conv1d_forward(a, params[w], params[b])
        out, mask = nc.dropout(nc.relu(pre), config.dropout, mode, rng)
        layers.append({"layer": layer, "input": a, "pre": pre, "mask": mask})
        a = out
    pooled, argmax = nc.global_max_pool1d(a)
    return pooled, {"layers": layers, "argmax": argmax, "time_len": a.shape[1]}


def encode_backward(params, cache, grad_h, trainable=(1, 2, 3)):
    """Gradients for the conv layers listed in ``trainable``.

    Backpropagation stops below the lowest trainable layer.
    """
    grads = {}
    lowest = min(trainable) if trainable else None
    if lowest is None:
        return grads
    g = nc.global_max_pool1d_backward(grad_h, cache["argmax"], cache["time_len"])
    for entry in reversed(cache["layers"]):
        layer = entry["layer"]
        if layer < lowest:
            break
        g = nc.dropout_backward(g, entry["mask"])
        g = nc.relu_backward(g, entry["pre"])
        w, b = conv_names(layer)
        need_input = layer > lowest
        g, gw, gb = nc.conv1d_backward(g, entry["input"], params[w], need_input_grad=need_input)
        if layer in trainable:
            grads[w] = gw
            grads[b] = gb
    return grads


def encode_prefix(params, x, upto, config=EncoderConfig()):
    """Deterministic output of conv layers ``1..upto`` after ReLU (before dropout)."""
    a = x
    for layer in range(1, upto + 1):
        w, b = conv_names(layer)
        a = nc.relu(nc.conv1d_forward(a, params[w], params[b]))
    return a


# --------------------------------------------------------------------------
# Heads
# --------------------------------------------------------------------------

def _mlp_forward(params, h, names):
    cache = []
    a = h
    for i, name in enumerate(names):
        pre = nc.dense(a, params[f"{name}.weight"], params[f"{name}.bias"])
        cache.append((name, a, pre))
        a = nc.relu(pre) if i < len(names) - 1 else pre
    return a, cache


def _mlp_backward(params, cache, grad_out, need_input_grad=True):
    grads = {}
    g = grad_out
    for i in range(len(cache) - 1, -1, -1):
        name, a_in, pre = cache[i]
        if i < len(cache) - 1:
            g = nc.relu_backward(g, pre)
        need = need_input_grad or i > 0
        g, gw, gb = nc.dense_backward(g, a_in, params[f"{name}.weight"], need_input_grad=need)
        grads[f"{name}.weight"] = gw
        grads[f"{name}.bias"] = gb
    return grads, g


def _proj_names(params):
    n = sum(1 for k in params if k.startswith("proj.fc") and k.endswith(".weight"))
    return [f"proj.fc{i}" for i in range(1, n + 1)]


def project(params, h):
    """Dense -> ReLU -> dense -> ReLU -> dense; no activation on the output."""
    if h.ndim != 2 or h.shape[1] != params["proj.fc1.weight"].shape[0]:
        raise DimensionError(f"projection input has shape {h.shape}")
    return _mlp_forward(params, h, _proj_names(params))


def project_backward(params, cache, grad_z, need_input_grad=True):
    return _mlp_backward(params, cache, grad_z, need_input_grad)


def _head_names(head):
    if head == LINEAR:
        return ["head.linear"]
    if head == FINETUNE:
        return ["head.ft1", "head.ft2"]
    raise ValueError(f"unknown head {head!r}")


def classify(params, h, head=LINEAR):
    names = _head_names(head)
    if h.ndim != 2 or h.shape[1] != params[f"{names[0]}.weight"].shape[0]:
        raise DimensionError(f"classifier input has shape {h.shape}")
    return _mlp_forward(params, h, names)


def classify_backward(params, cache, grad_logits, need_input_grad=True):
    return _mlp_backward(params, cache, grad_logits, need_input_grad)


def predict(params, x, head, config=EncoderConfig(), batch_size=512):
    """EVAL-mode class predictions for a stack of windows."""
    preds = []
    for i in range(0, len(x), batch_size):
        h, _ = encode(params, x[i:i + batch_size], nc.EVAL, config=config)
        logits, _ = classify(params, h, head)
        preds.append(np.argmax(logits, axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def save_params(stem, params, meta=None):
    return nc.save_tensors(stem, params, meta)


def load_params(stem):
    params, _ = nc.load_tensors(stem)
    return params
