"""Contrastive pretraining and the three label-using evaluation protocols."""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import model as M
from . import numcore as nc
from .augment import TransformPipeline, derive_seed, rng_stream, two_views
from .data import stack
from .metrics import confusion, weighted_f1

log = logging.getLogger(__name__)

LINEAR = M.LINEAR
FINETUNE = M.FINETUNE
SUPERVISED = "supervised"
PROTOCOLS = (LINEAR, FINETUNE, SUPERVISED)

# (optimizer kind, learning rate) per evaluation protocol
PROTOCOL_OPTIMIZER = {
    LINEAR: (nc.SGD, 0.03),
    FINETUNE: (nc.ADAM, 0.001),
    SUPERVISED: (nc.ADAM, 0.001),
}

# conv layers updated by each protocol
PROTOCOL_TRAINABLE_CONV = {
    LINEAR: (),
    FINETUNE: (3,),
    SUPERVISED: (1, 2, 3),
}

_PREFIX_CACHE_BYTES = 512 * 2**20


class TrainingError(RuntimeError):
    pass


class TrainingDiverged(TrainingError):
    pass


@dataclass
class PretrainConfig:
    epochs: int = 200
    batch_size: int = 512
    base_lr: float = 0.1
    temperature: float = 0.1
    pipeline: TransformPipeline = field(default_factory=TransformPipeline)
    seed: int = 0
    encoder: M.EncoderConfig = field(default_factory=M.EncoderConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")

    def echo(self):
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "base_lr": self.base_lr,
            "temperature": self.temperature,
            "pipeline": self.pipeline.spec,
            "seed": self.seed,
            "encoder": asdict(self.encoder),
        }


@dataclass
class EvalConfig:
    protocol: str = LINEAR
    epochs: int = 50
    lr: float = None
    batch_size: int = 512
    seed: int = 0
    encoder: M.EncoderConfig = field(default_factory=M.EncoderConfig)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr is None:
            self.lr = PROTOCOL_OPTIMIZER[self.protocol][1]

    @property
    def optimizer_kind(self):
        return PROTOCOL_OPTIMIZER[self.protocol][0]

    def echo(self):
        return {
            "protocol": self.protocol,
            "epochs": self.epochs,
            "optimizer": self.optimizer_kind,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "seed": self.seed,
        }


@dataclass
class TrainRecord:
    losses: list
    params: dict
    duration: float
    config: dict
    seed: int

    def to_dict(self):
        return {
            "config": self.config,
            "seed": self.seed,
            "duration_s": self.duration,
            "epoch_losses": [float(v) for v in self.losses],
        }

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


@dataclass
class EvalResult:
    record: TrainRecord
    f1: float
    confusion: np.ndarray

    def __iter__(self):
        # allows ``record, f1 = linear_eval(...)``
        return iter((self.record, self.f1))


class _DivergenceGuard:
    """Abort on non-finite loss, or on loss > 10x its first value for 5 epochs running."""

    def __init__(self, factor=10.0, patience=5):
        self.factor = factor
        self.patience = patience
        self.initial = None
        self.strikes = 0

    def check(self, epoch, loss):
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss {loss} at epoch {epoch}")
        if self.initial is None:
            self.initial = loss
            return
        if loss > self.factor * abs(self.initial):
            self.strikes += 1
            if self.strikes >= self.patience:
                raise TrainingDiverged(
                    f"loss {loss:.4g} above {self.factor}x initial {self.initial:.4g} "
                    f"for {self.patience} consecutive epochs (epoch {epoch})")
        else:
            self.strikes = 0


def _effective_batch(requested, n, what):
    if n < 1:
        raise TrainingError(f"empty {what} set")
    if requested > n:
        log.warning("%s batch size %d exceeds %d available windows; clamping", what, requested, n)
        return n
    return requested


# --------------------------------------------------------------------------
# Contrastive pretraining
# --------------------------------------------------------------------------

def pretrain_simclr(x, config, params=None):
    """Contrastive pretraining of encoder + projection head.

    ``x`` is a bare ``[N, L, 3]`` array: labels are never passed in. Each
    epoch reshuffles the windows, drops the trailing partial batch, builds two
    transformed views per window and minimises NT-Xent with cosine-decayed
    SGD over ``epochs * (N // batch)`` steps.
    """
    if not isinstance(x, np.ndarray):
        raise TrainingError("pretraining takes a bare [N, L, C] array of signals, not labelled windows")
    x = x.astype(np.float32, copy=False)
    if x.ndim != 3:
        raise TrainingError(f"pretraining input must be [N, L, C], got {x.shape}")
    n = x.shape[0]
    batch = _effective_batch(config.batch_size, n, "pretraining")
    if batch < 2:
        raise TrainingError("pretraining needs at least two windows per batch")
    n_batches = n // batch
    total_steps = config.epochs * n_batches
    seed = config.seed
    if params is None:
        params = M.init_params(config.encoder, seed=derive_seed(seed, 0))
    else:
        params = M.copy_params(params)
    opt = nc.OptimizerState(nc.SGD_COSINE, config.base_lr, total_steps=total_steps)
    guard = _DivergenceGuard()
    trainable = tuple(range(1, len(config.encoder.kernel_sizes) + 1))
    losses = []
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        order = rng_stream(seed, 1, epoch).permutation(n)
        pipeline = config.pipeline.reseeded(derive_seed(seed, 2, epoch))
        batch_losses = []
        for b in range(n_batches):
            idx = order[b * batch:(b + 1) * batch]
            view_a, view_b = two_views(pipeline, x[idx], idx)
            views = np.empty((2 * batch,) + x.shape[1:], dtype=np.float32)
            views[0::2] = view_a
            views[1::2] = view_b
            loss, grads = contrastive_step(params, views, config.temperature,
                                           rng_stream(seed, 3, epoch, b), config.encoder, trainable)
            nc.optimizer_step(opt, params, grads)
            batch_losses.append(loss)
        epoch_loss = float(np.mean(batch_losses))
        guard.check(epoch, epoch_loss)
        losses.append(epoch_loss)
        log.info("pretrain epoch %d/%d loss %.4f", epoch + 1, config.epochs, epoch_loss)
    return TrainRecord(losses, params, time.perf_counter() - t0,
                       {"stage": "pretrain", **config.echo()}, seed)


def contrastive_step(params, views, temperature, rng, encoder=M.EncoderConfig(),
                     trainable=(1, 2, 3), mode=nc.TRAIN):
    """Loss and gradients for one batch of interleaved views (rows 2i, 2i+1 pair up)."""
    h, enc_cache = M.encode(params, views, mode, rng, encoder)
    z, proj_cache = M.project(params, h)
    zn, norms = nc.l2_normalize(z)
    loss, grad_zn = nc.nt_xent_loss(zn, temperature)
    grad_z = nc.l2_normalize_backward(grad_zn, zn, norms)
    grads, grad_h = M.project_backward(params, proj_cache, grad_z)
    grads.update(M.encode_backward(params, enc_cache, grad_h, trainable))
    return loss, grads


# --------------------------------------------------------------------------
# Classification protocols
# --------------------------------------------------------------------------

def _fresh_head(params, config, head):
    """Copy of ``params`` with the requested head re-initialised from the eval seed."""
    out = M.copy_params(params)
    fresh = M.init_params(config.encoder, seed=derive_seed(config.seed, 10))
    prefix = "head.linear" if head == M.LINEAR else "head.ft"
    for k in fresh:
        if k.startswith(prefix):
            out[k] = fresh[k]
    return out


def _batched(fn, x, batch_size=256):
    return np.concatenate([fn(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])


def _train_classifier(params, x, y, config):
    protocol = config.protocol
    head = M.LINEAR if protocol == LINEAR else M.FINETUNE
    enc = config.encoder
    trainable_conv = PROTOCOL_TRAINABLE_CONV[protocol]
    n = x.shape[0]
    batch = _effective_batch(config.batch_size, n, "evaluation")
    n_batches = math.ceil(n / batch)
    seed = config.seed
    opt = nc.OptimizerState(config.optimizer_kind, config.lr,
                            total_steps=max(1, config.epochs * n_batches))
    head_names = [k for k in params if k.startswith("head.linear" if head == M.LINEAR else "head.ft")]

    # Frozen-prefix caching: the linear protocol never changes the encoder,
    # and the fine-tune protocol never changes conv1/conv2.
    start_layer = min(trainable_conv) if trainable_conv else None
    features = None
    prefix = None
    if start_layer is None:
        features = _batched(lambda xb: M.encode(params, xb, nc.EVAL, config=enc)[0], x)
    elif start_layer > 1:
        n_bytes = n * 4 * _prefix_size(enc, start_layer - 1)
        if n_bytes <= _PREFIX_CACHE_BYTES:
            prefix = _batched(lambda xb: M.encode_prefix(params, xb, start_layer - 1, enc), x)

    guard = _DivergenceGuard()
    losses = []
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        order = rng_stream(seed, 11, epoch).permutation(n)
        batch_losses = []
        for b in range(n_batches):
            idx = order[b * batch:(b + 1) * batch]
            rng = rng_stream(seed, 12, epoch, b)
            if features is not None:
                h, enc_cache = features[idx], None
            elif start_layer > 1:
                inp = prefix[idx] if prefix is not None else M.encode_prefix(params, x[idx], start_layer - 1, enc)
                h, enc_cache = M.encode(params, inp, nc.TRAIN, rng, enc, start_layer=start_layer)
            else:
                h, enc_cache = M.encode(params, x[idx], nc.TRAIN, rng, enc)
            logits, head_cache = M.classify(params, h, head)
            loss, grad_logits = nc.softmax_cross_entropy(logits, y[idx])
            grads, grad_h = M.classify_backward(params, head_cache, grad_logits,
                                                need_input_grad=enc_cache is not None)
            if enc_cache is not None:
                grads.update(M.encode_backward(params, enc_cache, grad_h, trainable_conv))
            nc.optimizer_step(opt, params, grads)
            batch_losses.append(loss * len(idx))
        epoch_loss = float(np.sum(batch_losses) / n)
        guard.check(epoch, epoch_loss)
        losses.append(epoch_loss)
        log.info("%s epoch %d/%d loss %.4f", protocol, epoch + 1, config.epochs, epoch_loss)
    return losses, time.perf_counter() - t0, head, head_names


def _prefix_size(enc, upto):
    length = enc.input_length
    for k in enc.kernel_sizes[:upto]:
        length -= k - 1
    return length * enc.filters[upto - 1]


def _evaluate(params, split, config, losses, duration, head):
    x_test, y_test, _ = stack(split.test)
    pred = M.predict(params, x_test, head, config.encoder)
    cm = confusion(y_test, pred, config.encoder.n_classes)
    f1 = weighted_f1(cm)
    record = TrainRecord(losses, params, duration, config.echo(), config.seed)
    return EvalResult(record, f1, cm)


def _check_split(split):
    if not split.train:
        raise TrainingError("empty training split")
    if not split.test:
        raise TrainingError("empty test split")


def _run_protocol(start_params, split, config):
    _check_split(split)
    x, y, _ = stack(split.train)
    head = M.LINEAR if config.protocol == LINEAR else M.FINETUNE
    params = _fresh_head(start_params, config, head)
    losses, duration, head, _ = _train_classifier(params, x, y, config)
    return _evaluate(params, split, config, losses, duration, head)


def linear_eval(pretrained, split, config):
    """Frozen encoder (EVAL mode) + one trainable dense layer; SGD."""
    if config.protocol != LINEAR:
        raise ValueError("linear_eval needs an EvalConfig with protocol 'linear'")
    return _run_protocol(pretrained, split, config)


def finetune_eval(pretrained, split, config):
    """conv1/conv2 frozen; conv3 and the two-layer head trained with Adam."""
    if config.protocol != FINETUNE:
        raise ValueError("finetune_eval needs an EvalConfig with protocol 'finetune'")
    return _run_protocol(pretrained, split, config)


def supervised_baseline(split, config):
    """Encoder + two-layer head trained end to end from a fresh initialisation."""
    if config.protocol != SUPERVISED:
        raise ValueError("supervised_baseline needs an EvalConfig with protocol 'supervised'")
    params = M.init_params(config.encoder, seed=derive_seed(config.seed, 20))
    return _run_protocol(params, split, config)


def evaluate_protocol(pretrained, split, config):
    if config.protocol == LINEAR:
        return linear_eval(pretrained, split, config)
    if config.protocol == FINETUNE:
        return finetune_eval(pretrained, split, config)
    return supervised_baseline(split, config)
