"""Forward and backward passes of the layers used by the 1D CNN.

Each ``*_forward`` returns ``(out, cache)``; the matching ``*_backward`` takes
the upstream gradient and that cache.  Arrays are ``(batch, channels, length)``
for the convolutional part and ``(batch, features)`` for the head.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidInputError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def conv1d_forward(x, w, b, pad=2):
    """Stride-1 cross-correlation with symmetric zero padding."""
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise InvalidInputError(f"conv1d shape mismatch: input {x.shape}, weights {w.shape}")
    if b.shape != (w.shape[0],):
        raise InvalidInputError(f"conv1d bias shape {b.shape} does not match {w.shape[0]} filters")
    k = w.shape[2]
    length = x.shape[2]
    if length + 2 * pad - k + 1 < 1:
        raise InvalidInputError(f"input length {length} too short for kernel {k} with padding {pad}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    windows = sliding_window_view(xp, k, axis=2)  # (B, C, L_out, K)
    out = np.tensordot(windows, w, axes=([1, 3], [1, 2]))  # (B, L_out, O)
    out = out.transpose(0, 2, 1) + b[None, :, None]
    return np.ascontiguousarray(out), (windows, w, pad, xp.shape)


def conv1d_backward(dout, cache):
    windows, w, pad, padded_shape = cache
    k = w.shape[2]
    l_out = dout.shape[2]
    dw = np.tensordot(dout, windows, axes=([0, 2], [0, 2]))  # (O, C, K)
    db = dout.sum(axis=(0, 2))
    dxp = np.zeros(padded_shape)
    for j in range(k):
        dxp[:, :, j : j + l_out] += np.einsum("oc,bol->bcl", w[:, :, j], dout, optimize=True)
    dx = dxp[:, :, pad : padded_shape[2] - pad]
    return dx, dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train, eps=BN_EPS, momentum=BN_MOMENTUM):
    """Per-channel batch normalization over the batch and length axes.

    In training mode the running statistics arrays are updated in place.
    """
    if train:
        mu = x.mean(axis=(0, 2))
        var = x.var(axis=(0, 2))
        n = x.shape[0] * x.shape[2]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        unbiased = var * n / (n - 1) if n > 1 else var
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        if running_mean is None or running_var is None:
            raise InvalidInputError("batch norm evaluated before running statistics exist")
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu[None, :, None]) * inv_std[None, :, None]
    out = gamma[None, :, None] * xhat + beta[None, :, None]
    return out, (xhat, gamma, inv_std)


def batchnorm_backward(dout, cache):
    """Gradient of training-mode batch normalization."""
    xhat, gamma, inv_std = cache
    n = dout.shape[0] * dout.shape[2]
    dbeta = dout.sum(axis=(0, 2))
    dgamma = (dout * xhat).sum(axis=(0, 2))
    dxhat = dout * gamma[None, :, None]
    dx = (inv_std[None, :, None] / n) * (
        n * dxhat
        - dxhat.sum(axis=(0, 2))[None, :, None]
        - xhat * (dxhat * xhat).sum(axis=(0, 2))[None, :, None]
    )
    return dx, dgamma, dbeta


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def affine_forward(x, W, b):
    if x.ndim != 2 or x.shape[1] != W.shape[0] or b.shape != (W.shape[1],):
        raise InvalidInputError(f"affine shape mismatch: input {x.shape}, W {W.shape}, b {b.shape}")
    return x @ W + b, (x, W)


def affine_backward(dout, cache):
    x, W = cache
    return dout @ W.T, x.T @ dout, dout.sum(axis=0)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient with respect to the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    log_p = z[np.arange(n), labels] - log_norm
    loss = -float(log_p.mean())
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def mse_loss(pred, targets):
    diff = pred.reshape(-1) - np.asarray(targets, dtype=np.float64).reshape(-1)
    n = diff.shape[0]
    return float(diff @ diff / n), (2.0 * diff / n).reshape(pred.shape)
