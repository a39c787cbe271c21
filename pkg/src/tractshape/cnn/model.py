"""The 1D CNN: three conv/batch-norm/ReLU blocks followed by a fully connected head."""

import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidInputError
from .layers import (
    affine_backward,
    affine_forward,
    batchnorm_backward,
    batchnorm_forward,
    conv1d_backward,
    conv1d_forward,
    mse_loss,
    relu_backward,
    relu_forward,
    softmax,
    softmax_cross_entropy,
)

CLASSIFICATION = "classification"
REGRESSION = "regression"


@dataclass(frozen=True)
class Architecture:
    input_length: int = 1516
    channels: int = 64
    kernel: int = 5
    n_blocks: int = 3
    hidden: tuple = (512, 128)
    n_outputs: int = 2
    head_relu: bool = True

    @property
    def pad(self):
        return (self.kernel - 1) // 2

    @property
    def flat_size(self):
        return self.channels * self.input_length


class Cnn1dModel:
    """Parameters, batch-norm buffers and target scaling of one trained network."""

    def __init__(self, arch, params, buffers, task, target_mean=0.0, target_std=1.0):
        self.arch = arch
        self.params = params
        self.buffers = buffers
        self.task = task
        self.target_mean = float(target_mean)
        self.target_std = float(target_std)
        self.train_mode = True
        self._caches = None

    @classmethod
    def init(cls, arch, task, rng):
        """Uniform ``+-sqrt(6 / fan_in)`` weights, zero biases, unit batch-norm scale."""
        params, buffers = {}, {}
        c_in = 1
        for i in range(arch.n_blocks):
            fan_in = c_in * arch.kernel
            bound = np.sqrt(6.0 / fan_in)
            params[f"conv{i}.w"] = rng.uniform(-bound, bound, size=(arch.channels, c_in, arch.kernel))
            params[f"conv{i}.b"] = np.zeros(arch.channels)
            params[f"bn{i}.gamma"] = np.ones(arch.channels)
            params[f"bn{i}.beta"] = np.zeros(arch.channels)
            buffers[f"bn{i}.running_mean"] = np.zeros(arch.channels)
            buffers[f"bn{i}.running_var"] = np.ones(arch.channels)
            c_in = arch.channels
        sizes = [arch.flat_size, *arch.hidden, arch.n_outputs]
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = np.sqrt(6.0 / n_in)
            params[f"fc{i}.W"] = rng.uniform(-bound, bound, size=(n_in, n_out))
            params[f"fc{i}.b"] = np.zeros(n_out)
        return cls(arch, params, buffers, task)

    @property
    def n_fc(self):
        return len(self.arch.hidden) + 1

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[:, None, :]
        if x.ndim != 3 or x.shape[1] != 1 or x.shape[2] != self.arch.input_length:
            raise InvalidInputError(
                f"expected input of shape (batch, 1, {self.arch.input_length}), got {x.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise InvalidInputError("input batch contains non-finite values")
        return x

    def forward(self, x, train=None):
        """Network output (logits or standardized regression value) for a batch."""
        train = self.train_mode if train is None else train
        h = self._check_input(x)
        p, caches = self.params, []
        for i in range(self.arch.n_blocks):
            h, c_conv = conv1d_forward(h, p[f"conv{i}.w"], p[f"conv{i}.b"], self.arch.pad)
            h, c_bn = batchnorm_forward(
                h,
                p[f"bn{i}.gamma"],
                p[f"bn{i}.beta"],
                self.buffers[f"bn{i}.running_mean"],
                self.buffers[f"bn{i}.running_var"],
                train,
            )
            h, c_relu = relu_forward(h)
            caches.append((c_conv, c_bn, c_relu))
        conv_shape = h.shape
        h = h.reshape(h.shape[0], -1)
        for i in range(self.n_fc):
            h, c_fc = affine_forward(h, p[f"fc{i}.W"], p[f"fc{i}.b"])
            c_relu = None
            if i < self.n_fc - 1 and self.arch.head_relu:
                h, c_relu = relu_forward(h)
            caches.append((c_fc, c_relu))
        self._caches = (caches, conv_shape, train)
        return h

    def backward(self, dout):
        """Gradients of every parameter given the gradient at the network output."""
        if self._caches is None:
            raise InvalidInputError("backward called before forward")
        caches, conv_shape, train = self._caches
        if not train:
            raise InvalidInputError("backward requires a training-mode forward pass")
        grads = {}
        nb = self.arch.n_blocks
        g = dout
        for i in reversed(range(self.n_fc)):
            c_fc, c_relu = caches[nb + i]
            if c_relu is not None:
                g = relu_backward(g, c_relu)
            g, grads[f"fc{i}.W"], grads[f"fc{i}.b"] = affine_backward(g, c_fc)
        g = g.reshape(conv_shape)
        for i in reversed(range(nb)):
            c_conv, c_bn, c_relu = caches[i]
            g = relu_backward(g, c_relu)
            g, grads[f"bn{i}.gamma"], grads[f"bn{i}.beta"] = batchnorm_backward(g, c_bn)
            g, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = conv1d_backward(g, c_conv)
        return grads

    def copy(self):
        return Cnn1dModel(
            self.arch,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
            self.task,
            self.target_mean,
            self.target_std,
        )

    def save(self, path_or_file):
        """Write an ``.npz`` checkpoint: arrays at full precision plus a JSON descriptor."""
        meta = {
            "format": "tractshape-cnn1d/1",
            "architecture": asdict(self.arch),
            "task": self.task,
            "target_mean": self.target_mean,
            "target_std": self.target_std,
            "train_mode": self.train_mode,
        }
        arrays = {f"param/{k}": v for k, v in self.params.items()}
        arrays.update({f"buffer/{k}": v for k, v in self.buffers.items()})
        np.savez(path_or_file, __meta__=np.array(json.dumps(meta)), **arrays)

    @classmethod
    def load(cls, path_or_file):
        with np.load(path_or_file, allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            arch_d = meta["architecture"]
            arch_d["hidden"] = tuple(arch_d["hidden"])
            params = {k[6:]: data[k].copy() for k in data.files if k.startswith("param/")}
            buffers = {k[7:]: data[k].copy() for k in data.files if k.startswith("buffer/")}
        model = cls(Architecture(**arch_d), params, buffers, meta["task"], meta["target_mean"], meta["target_std"])
        model.train_mode = meta["train_mode"]
        return model

    def to_bytes(self):
        buf = io.BytesIO()
        self.save(buf)
        return buf.getvalue()


def backward_pass(model, batch, targets, loss_kind):
    """Training-mode forward, loss and reverse pass; returns ``(loss, grads)``."""
    out = model.forward(batch, train=True)
    if loss_kind == "cross_entropy":
        loss, dout = softmax_cross_entropy(out, targets)
    elif loss_kind == "mse":
        loss, dout = mse_loss(out, targets)
    else:
        raise InvalidInputError(f"unknown loss {loss_kind!r}")
    return loss, model.backward(dout)


def cnn_predict(model, batch, chunk=64):
    """Evaluation-mode predictions: class probabilities, or de-standardized regression values."""
    x = np.asarray(batch, dtype=np.float64)
    outs = [model.forward(x[i : i + chunk], train=False) for i in range(0, len(x), chunk)]
    out = np.concatenate(outs) if outs else np.zeros((0, model.arch.n_outputs))
    model._caches = None
    if model.task == CLASSIFICATION:
        return softmax(out)
    return model.target_mean + model.target_std * out[:, 0]
