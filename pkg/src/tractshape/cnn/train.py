"""Mini-batch SGD training loop for :class:`Cnn1dModel`."""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import DivergenceError, InvalidInputError
from .model import CLASSIFICATION, REGRESSION, Architecture, Cnn1dModel, backward_pass

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 8
    epochs: int = 300
    momentum: float = 0.0
    seed: int = 0
    standardize_targets: bool = True
    channels: int = 64
    hidden: tuple = (512, 128)
    head_relu: bool = True
    clip_norm: Optional[float] = 20.0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InvalidInputError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidInputError("batch_size and epochs must be >= 1")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise InvalidInputError(f"clip_norm must be positive, got {self.clip_norm}")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidInputError(f"momentum must lie in [0, 1), got {self.momentum}")


def sgd_step(params, grads, state, lr, momentum=0.0):
    """In-place SGD update with an optional heavy-ball momentum buffer."""
    for name, g in grads.items():
        if momentum:
            v = state.get(name)
            v = g.copy() if v is None else momentum * v + g
            state[name] = v
            params[name] -= lr * v
        else:
            g *= lr
            params[name] -= g
    return params


def clip_gradients(grads, max_norm):
    """Rescale all gradients together so their global L2 norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm
    return norm


def train_cnn(X, y, task, config=None, arch=None):
    """Train on rows of ``X`` (already max-min scaled) and return ``(model, loss_trace)``."""
    config = config or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise InvalidInputError(f"bad training data shapes X={X.shape}, y={y.shape}")

    if task == CLASSIFICATION:
        targets = y.astype(np.int64)
        if not np.all((targets == 0) | (targets == 1)):
            raise InvalidInputError("classification labels must be 0 or 1")
        n_out, loss_kind = 2, "cross_entropy"
        mean, std = 0.0, 1.0
    elif task == REGRESSION:
        targets = y.astype(np.float64)
        n_out, loss_kind = 1, "mse"
        mean, std = 0.0, 1.0
        if config.standardize_targets:
            mean = float(targets.mean())
            std = float(targets.std()) or 1.0
            targets = (targets - mean) / std
    else:
        raise InvalidInputError(f"unknown task {task!r}")

    arch = arch or Architecture(
        input_length=X.shape[1],
        channels=config.channels,
        hidden=tuple(config.hidden),
        n_outputs=n_out,
        head_relu=config.head_relu,
    )
    init_rng = np.random.default_rng([config.seed, 0])
    order_rng = np.random.default_rng([config.seed, 1])
    model = Cnn1dModel.init(arch, task, init_rng)
    model.target_mean, model.target_std = mean, std

    n = len(targets)
    state = {}
    trace = []
    for epoch in range(config.epochs):
        order = order_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = backward_pass(model, X[idx], targets[idx], loss_kind)
            if not math.isfinite(loss):
                raise DivergenceError(f"training diverged at epoch {epoch + 1} (loss {loss})", epoch=epoch + 1)
            if config.clip_norm is not None:
                clip_gradients(grads, config.clip_norm)
            sgd_step(model.params, grads, state, config.learning_rate, config.momentum)
            total += loss * len(idx)
        trace.append(total / n)
        if (epoch + 1) % 50 == 0:
            log.debug("epoch %d loss %.6g", epoch + 1, trace[-1])
    model.train_mode = False
    model._caches = None
    return model, trace
