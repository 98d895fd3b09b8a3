"""Finite-difference verification of every backward kernel, in float64.

Each check builds a random small instance, reduces the kernel output to a
scalar with a fixed random weighting, and compares the hand-written
backward pass against central differences via :func:`numcore.grad_check`.
"""

import numpy as np

from . import model as M
from . import numcore as nc

TOLERANCE = 1e-4

TINY_ENCODER = M.EncoderConfig(kernel_sizes=(3, 3, 2), filters=(4, 5, 6), dropout=0.2,
                               input_length=12, proj_units=(7, 5, 4), ft_hidden=8)


def _weighted(forward, backward, inputs, r, fault):
    weights = r.normal(size=np.shape(forward(**inputs)))
    analytic = backward(weights, **inputs)
    if fault:
        analytic = {k: v * 1.1 for k, v in analytic.items()}
    return nc.grad_check(lambda p: float(np.sum(forward(**p) * weights)), inputs, analytic,
                         tolerance=TOLERANCE)


def check_conv1d(r, fault=False):
    k, ci, co = (int(v) for v in r.integers(1, 4, size=3))
    inputs = {"x": r.normal(size=(2, int(r.integers(k, 8)), ci)),
              "kernel": r.normal(size=(k, ci, co)), "bias": r.normal(size=co)}

    def backward(g, x, kernel, bias):
        gi, gk, gb = nc.conv1d_backward(g, x, kernel)
        return {"x": gi, "kernel": gk, "bias": gb}

    return _weighted(nc.conv1d_forward, backward, inputs, r, fault)


def check_relu(r, fault=False):
    x = r.normal(size=(3, 5))
    x = np.where(np.abs(x) < 1e-3, 0.5, x)
    return _weighted(nc.relu, lambda g, x: {"x": nc.relu_backward(g, x)}, {"x": x}, r, fault)


def check_dropout(r, fault=False):
    seed = int(r.integers(2**31))
    x = r.normal(size=(4, 6))
    mask = nc.dropout(x, 0.3, nc.TRAIN, np.random.default_rng(seed))[1]
    return _weighted(lambda x: nc.dropout(x, 0.3, nc.TRAIN, np.random.default_rng(seed))[0],
                     lambda g, x: {"x": nc.dropout_backward(g, mask)}, {"x": x}, r, fault)


def check_max_pool(r, fault=False):
    x = r.normal(size=(3, 7, 4))

    def backward(g, x):
        return {"x": nc.global_max_pool1d_backward(g, nc.global_max_pool1d(x)[1], x.shape[1])}

    return _weighted(lambda x: nc.global_max_pool1d(x)[0], backward, {"x": x}, r, fault)


def check_dense(r, fault=False):
    inputs = {"x": r.normal(size=(3, 4)), "weight": r.normal(size=(4, 2)), "bias": r.normal(size=2)}

    def backward(g, x, weight, bias):
        gx, gw, gb = nc.dense_backward(g, x, weight)
        return {"x": gx, "weight": gw, "bias": gb}

    return _weighted(nc.dense, backward, inputs, r, fault)


def check_softmax_ce(r, fault=False):
    logits = r.normal(size=(5, 6)) * 2
    labels = r.integers(0, 6, size=5)
    _, grad = nc.softmax_cross_entropy(logits, labels)
    if fault:
        grad = grad * 1.1
    return nc.grad_check(lambda p: nc.softmax_cross_entropy(p["logits"], labels)[0],
                         {"logits": logits}, {"logits": grad}, tolerance=TOLERANCE)


def check_l2_normalize(r, fault=False):
    def backward(g, x):
        y, n = nc.l2_normalize(x)
        return {"x": nc.l2_normalize_backward(g, y, n)}

    return _weighted(lambda x: nc.l2_normalize(x)[0], backward, {"x": r.normal(size=(3, 5))}, r, fault)


def check_nt_xent(r, fault=False):
    n, d = int(r.integers(1, 5)), int(r.integers(2, 8))
    tau = float(r.choice([0.1, 0.5, 1.0]))
    z = nc.l2_normalize(r.normal(size=(2 * n, d)))[0]
    _, grad = nc.nt_xent_loss(z, tau)
    if fault:
        grad = grad * 1.1
    return nc.grad_check(lambda p: nc.nt_xent_loss(p["z"], tau)[0], {"z": z}, {"z": grad},
                         tolerance=TOLERANCE)


def check_encoder_ntxent(r, fault=False):
    """encode (TRAIN, fixed dropout masks) -> project -> l2 normalise -> NT-Xent."""
    from .train import contrastive_step

    params = M.init_params(TINY_ENCODER, seed=int(r.integers(2**31)))
    params = {k: (r.normal(0, 0.5, v.shape) if k.endswith("bias") else v.astype(np.float64))
              for k, v in params.items()}
    x = r.normal(size=(4, TINY_ENCODER.input_length, TINY_ENCODER.channels))
    mask_seed = int(r.integers(2**31))
    tau = 0.5

    def loss_fn(p):
        return contrastive_step(p, x, tau, np.random.default_rng(mask_seed), TINY_ENCODER)[0]

    _, grads = contrastive_step(params, x, tau, np.random.default_rng(mask_seed), TINY_ENCODER)
    if fault:
        grads = {k: v * 1.1 for k, v in grads.items()}
    checked = {k: v for k, v in params.items() if k in grads}
    return nc.grad_check(loss_fn, checked, grads, tolerance=TOLERANCE)


KERNEL_CHECKS = {
    "conv1d": check_conv1d,
    "relu": check_relu,
    "dropout": check_dropout,
    "global_max_pool1d": check_max_pool,
    "dense": check_dense,
    "softmax_cross_entropy": check_softmax_ce,
    "l2_normalize": check_l2_normalize,
    "nt_xent_loss": check_nt_xent,
    "encoder_projection_nt_xent": check_encoder_ntxent,
}


def run_gradcheck_suite(n_instances=20, seed=0, fault=False):
    """Max relative error per kernel over ``n_instances`` random instances each."""
    results = {}
    for i, (name, check) in enumerate(KERNEL_CHECKS.items()):
        worst = 0.0
        for j in range(n_instances):
            r = np.random.default_rng([seed, i, j])
            worst = max(worst, check(r, fault).max_rel_error)
        results[name] = worst
    return results
