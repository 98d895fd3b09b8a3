"""Hand-rolled optimizers operating in place on dicts of named arrays."""

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import DimensionError, ParameterError

SGD = "sgd"
SGD_COSINE = "sgd_cosine"
ADAM = "adam"


class ScheduleOverflowError(ValueError):
    """Raised when a cosine schedule is stepped past its horizon."""


def cosine_lr(step, base_lr, total_steps):
    """Half-cosine decay from ``base_lr`` at step 0 down to 0 at ``total_steps``."""
    if total_steps <= 0:
        raise ParameterError(f"total_steps must be positive, got {total_steps}")
    if step < 0 or step > total_steps:
        raise ScheduleOverflowError(
            f"step {step} outside cosine horizon [0, {total_steps}]")
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class OptimizerState:
    kind: str
    base_lr: float
    total_steps: int = 1
    step_count: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-7
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (SGD, SGD_COSINE, ADAM):
            raise ParameterError(f"unknown optimizer kind {self.kind!r}")
        if self.base_lr <= 0:
            raise ParameterError(f"base_lr must be positive, got {self.base_lr}")
        if self.kind == SGD_COSINE and self.total_steps < 1:
            raise ParameterError("cosine schedule needs total_steps >= 1")

    def current_lr(self):
        if self.kind == SGD_COSINE:
            return cosine_lr(self.step_count, self.base_lr, self.total_steps)
        return self.base_lr


def optimizer_step(state, params, grads):
    """Apply one update to every entry of ``grads`` (params not in grads stay put).

    Parameters are updated in place; ``state.step_count`` is incremented.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise DimensionError(
                f"{name}: grad shape {g.shape} != param shape {params[name].shape}")
    if state.kind == SGD_COSINE and state.step_count >= state.total_steps:
        raise ScheduleOverflowError(
            f"cosine schedule exhausted after {state.total_steps} steps")

    lr = state.current_lr()
    if state.kind in (SGD, SGD_COSINE):
        for name, g in grads.items():
            p = params[name]
            p -= p.dtype.type(lr) * g
    else:
        t = state.step_count + 1
        b1, b2, eps = state.adam_beta1, state.adam_beta2, state.adam_epsilon
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for name, g in grads.items():
            p = params[name]
            m = state.adam_m.get(name)
            if m is None:
                m = state.adam_m[name] = np.zeros_like(p)
                state.adam_v[name] = np.zeros_like(p)
            v = state.adam_v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            m_hat = m / c1
            v_hat = v / c2
            p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype, copy=False)
    state.step_count += 1
    return params, state
