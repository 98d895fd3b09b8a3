import numpy as np

from .kernels import DimensionError, ParameterError


class LabelError(ValueError):
    """Raised when a class label falls outside ``[0, n_classes)``."""


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy of integer ``labels`` under ``softmax(logits)``.

    Returns ``(loss, grad_logits)`` with ``grad = (softmax - onehot) / batch``.
    """
    if logits.ndim != 2:
        raise DimensionError(f"logits must be 2-D, got {logits.shape}")
    labels = np.asarray(labels)
    batch, n_classes = logits.shape
    if labels.shape != (batch,):
        raise DimensionError(f"labels shape {labels.shape} != ({batch},)")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise LabelError(f"labels must lie in [0, {n_classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    rows = np.arange(batch)
    loss = -log_p[rows, labels].mean()
    grad = np.exp(log_p)
    grad[rows, labels] -= 1
    grad /= batch
    return float(loss), grad


def nt_xent_loss(z, temperature):
    """Normalized temperature-scaled cross-entropy over a batch of view pairs.

    ``z`` holds ``2N`` unit-norm rows; rows ``2i`` and ``2i + 1`` are the two
    views of sample ``i``. Each row is scored against every other row, with
    its partner as the positive. Returns ``(loss, grad_z)``; the loss is the
    mean over all ``2N`` anchors.
    """
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    if z.ndim != 2:
        raise DimensionError(f"embeddings must be 2-D, got {z.shape}")
    m = z.shape[0]
    if m < 2 or m % 2:
        raise DimensionError(f"need an even number >= 2 of rows, got {m}")
    sim = (z @ z.T) / temperature
    rows = np.arange(m)
    pos = rows ^ 1
    masked = sim.copy()
    masked[rows, rows] = -np.inf
    peak = masked.max(axis=1, keepdims=True)
    expd = np.exp(masked - peak)
    denom = expd.sum(axis=1, keepdims=True)
    log_z = peak[:, 0] + np.log(denom[:, 0])
    loss = np.mean(log_z - sim[rows, pos])

    # dL/dsim[a, k] = (p[a, k] - [k == pos(a)]) / m
    g = expd / denom
    g[rows, pos] -= 1
    g /= m
    grad_z = (g + g.T) @ z / temperature
    return float(loss), grad_z
