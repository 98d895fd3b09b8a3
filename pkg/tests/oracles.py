"""Slow, independent reference implementations used only by the tests."""

import math

import numpy as np


def conv1d_loops(x, kernel, bias):
    batch, time_len, ch_in = x.shape
    k, _, ch_out = kernel.shape
    out = np.zeros((batch, time_len - k + 1, ch_out), dtype=np.float64)
    for b in range(batch):
        for t in range(time_len - k + 1):
            for o in range(ch_out):
                acc = float(bias[o])
                for tau in range(k):
                    for i in range(ch_in):
                        acc += float(x[b, t + tau, i]) * float(kernel[tau, i, o])
                out[b, t, o] = acc
    return out


def dense_loops(x, weight, bias):
    n, d_in = x.shape
    d_out = weight.shape[1]
    out = np.zeros((n, d_out))
    for r in range(n):
        for o in range(d_out):
            out[r, o] = bias[o] + sum(float(x[r, i]) * float(weight[i, o]) for i in range(d_in))
    return out


def max_pool_scan(x):
    batch, time_len, ch = x.shape
    pooled = np.zeros((batch, ch))
    where = np.zeros((batch, ch), dtype=int)
    for b in range(batch):
        for c in range(ch):
            best, arg = x[b, 0, c], 0
            for t in range(1, time_len):
                if x[b, t, c] > best:
                    best, arg = x[b, t, c], t
            pooled[b, c], where[b, c] = best, arg
    return pooled, where


def softmax_ce_direct(logits, labels):
    loss = 0.0
    grad = np.zeros_like(logits, dtype=np.float64)
    n, k = logits.shape
    for r in range(n):
        exps = [math.exp(v) for v in logits[r]]
        s = sum(exps)
        loss += -math.log(exps[labels[r]] / s)
        for c in range(k):
            grad[r, c] = (exps[c] / s - (1.0 if c == labels[r] else 0.0)) / n
    return loss / n, grad


def nt_xent_loss_pairs(z, tau):
    """Loss by enumerating every anchor/positive term (rows 2i, 2i+1 pair up)."""
    m = z.shape[0]
    total = 0.0
    for a in range(m):
        b = a ^ 1
        num = math.exp(float(np.dot(z[a], z[b])) / tau)
        den = 0.0
        for k in range(m):
            if k != a:
                den += math.exp(float(np.dot(z[a], z[k])) / tau)
        total += -math.log(num / den)
    return total / m


def nt_xent_pairs(z, tau):
    """Enumerated loss; gradient by finite differences."""
    z = np.array(z, dtype=np.float64)
    loss = nt_xent_loss_pairs(z, tau)
    grad = np.zeros_like(z)
    eps = 1e-6
    for idx in np.ndindex(*z.shape):
        zp = z.copy()
        zp[idx] += eps
        zm = z.copy()
        zm[idx] -= eps
        grad[idx] = (nt_xent_loss_pairs(zp, tau) - nt_xent_loss_pairs(zm, tau)) / (2 * eps)
    return loss, grad


def nt_xent_grad_pairs(z, tau):
    """Analytic gradient of the pair-enumerated loss, accumulated term by term."""
    z = np.array(z, dtype=np.float64)
    m = z.shape[0]
    grad = np.zeros_like(z)
    for a in range(m):
        b = a ^ 1
        sims = {k: float(np.dot(z[a], z[k])) / tau for k in range(m) if k != a}
        top = max(sims.values())
        den = sum(math.exp(v - top) for v in sims.values())
        # d(-sim_ab)/d z
        grad[a] -= z[b] / tau
        grad[b] -= z[a] / tau
        for k, v in sims.items():
            p = math.exp(v - top) / den
            grad[a] += p * z[k] / tau
            grad[k] += p * z[a] / tau
    return grad / m


def weighted_f1_tally(true, pred, n_classes):
    total = len(true)
    score = 0.0
    for c in range(n_classes):
        tp = sum(1 for t, p in zip(true, pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(true, pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(true, pred) if t == c and p != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        score += (tp + fn) * f1
    return score / total
