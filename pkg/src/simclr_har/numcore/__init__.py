"""Minimal differentiable numerics built on numpy arrays."""

from .checkpoint import CheckpointError, load_tensors, save_tensors
from .gradcheck import GradCheckReport, NonFiniteError, grad_check, relative_error
from .kernels import (
    EVAL,
    TRAIN,
    DegenerateEmbeddingError,
    DimensionError,
    ParameterError,
    conv1d_backward,
    conv1d_forward,
    dense,
    dense_backward,
    dropout,
    dropout_backward,
    global_max_pool1d,
    global_max_pool1d_backward,
    l2_normalize,
    l2_normalize_backward,
    relu,
    relu_backward,
)
from .losses import LabelError, nt_xent_loss, softmax_cross_entropy
from .optim import (
    ADAM,
    SGD,
    SGD_COSINE,
    OptimizerState,
    ScheduleOverflowError,
    cosine_lr,
    optimizer_step,
)
