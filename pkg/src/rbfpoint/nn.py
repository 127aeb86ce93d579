"""Dense layers with hand-derived backward passes.

Everything operates on float64 numpy arrays. Layers cache whatever the
forward pass needs for the backward pass; parameter gradients accumulate
until `zero_grads` is called, mirroring the usual minibatch workflow.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor shapes are inconsistent with a layer contract."""


class ParameterError(ValueError):
    """Raised for out-of-domain layer or kernel parameters."""


def as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Linear:
    """Affine map y = x @ w + b with gradient accumulation."""

    def __init__(self, in_dim: int, out_dim: int, rng=None, scale=None):
        if scale is None:
            scale = np.sqrt(2.0 / in_dim)
        if rng is None:
            self.w = np.zeros((in_dim, out_dim))
        else:
            self.w = rng.standard_normal((in_dim, out_dim)) * scale
        self.b = np.zeros(out_dim)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._x = None

    @property
    def in_dim(self):
        return self.w.shape[0]

    @property
    def out_dim(self):
        return self.w.shape[1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_f64(x)
        if x.ndim != 2 or x.shape[1] != self.w.shape[0]:
            raise ShapeError(
                f"linear expects [batch, {self.w.shape[0]}], got {x.shape} "
                f"for weight {self.w.shape}"
            )
        self._x = x
        out = x @ self.w
        out += self.b
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise ShapeError("linear backward called before forward")
        grad_out = as_f64(grad_out)
        if grad_out.shape != (self._x.shape[0], self.w.shape[1]):
            raise ShapeError(
                f"grad_out {grad_out.shape} does not match forward batch "
                f"{self._x.shape[0]} x out {self.w.shape[1]}"
            )
        self.gw += self._x.T @ grad_out
        self.gb += grad_out.sum(axis=0)
        return grad_out @ self.w.T

    def zero_grads(self):
        self.gw.fill(0.0)
        self.gb.fill(0.0)


class Relu:
    """Rectifier layer.

    Owns its buffers: forward clips `x` in place and backward overwrites
    `grad_out`, so callers must pass arrays they no longer need (the
    enclosing block always feeds it freshly computed activations/grads).
    """

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_f64(x)
        self._out = np.maximum(x, 0.0, out=x)
        return self._out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        # subgradient at exactly 0 is taken as 0; out > 0 iff input > 0
        grad_out = as_f64(grad_out)
        grad_out *= self._out > 0.0
        return grad_out


def relu_forward(x):
    return np.maximum(as_f64(x), 0.0)


def relu_backward(x, grad_out):
    return np.where(as_f64(x) > 0.0, as_f64(grad_out), 0.0)


class BatchNorm:
    """Batch normalization over axis 0, one statistic per feature.

    Pointwise layers fold the point axis into the batch axis before calling
    this, so statistics run over every point of every sample in the batch.
    """

    def __init__(self, dim: int, momentum: float = 0.9, eps: float = 1e-5):
        self.gamma = np.ones(dim)
        self.beta = np.zeros(dim)
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum
        self.eps = eps
        self.ggamma = np.zeros(dim)
        self.gbeta = np.zeros(dim)
        self._cache = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        x = as_f64(x)
        if x.ndim != 2 or x.shape[1] != self.gamma.shape[0]:
            raise ShapeError(
                f"batchnorm expects [rows, {self.gamma.shape[0]}], got {x.shape}"
            )
        if train:
            m = x.shape[0]
            if m < 2:
                raise ShapeError(
                    f"batchnorm train mode needs at least 2 rows, got {m}"
                )
            mean = x.mean(axis=0)
            # normalize x in place: the buffer becomes the cached xhat.
            # Centering before the squared-sum keeps the variance two-pass
            # accurate; the einsum avoids a full-size squared temp.
            xhat = x
            xhat -= mean
            var = np.einsum("ij,ij->j", xhat, xhat) / m
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat *= inv_std
            self.running_mean = (
                self.momentum * self.running_mean + (1.0 - self.momentum) * mean
            )
            self.running_var = (
                self.momentum * self.running_var + (1.0 - self.momentum) * var
            )
            self._cache = ("train", xhat, inv_std)
            out = xhat * self.gamma
            out += self.beta
            return out
        inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
        self._cache = ("eval", x, self.running_mean, inv_std)
        out = x * (self.gamma * inv_std)
        out += self.beta - self.running_mean * (self.gamma * inv_std)
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise ShapeError("batchnorm backward called before forward")
        grad_out = as_f64(grad_out)
        if self._cache[0] == "eval":
            _, x, mean, inv_std = self._cache
            xhat = x - mean
            xhat *= inv_std
            self.ggamma += np.einsum("ij,ij->j", grad_out, xhat)
            self.gbeta += grad_out.sum(axis=0)
            return grad_out * (self.gamma * inv_std)
        _, xhat, inv_std = self._cache
        dg = np.einsum("ij,ij->j", grad_out, xhat)
        gb = grad_out.sum(axis=0)
        self.ggamma += dg
        self.gbeta += gb
        # gx_hat = grad_out * gamma, so its per-feature sums are gamma-scaled;
        # grad_out and the cached xhat are consumed in place
        m = grad_out.shape[0]
        gx = grad_out
        gx *= float(m)
        gx -= gb
        xhat *= dg
        gx -= xhat
        gx *= self.gamma * inv_std / m
        self._cache = None
        return gx

    def zero_grads(self):
        self.ggamma.fill(0.0)
        self.gbeta.fill(0.0)


class Dropout:
    """Inverted dropout: kept units are rescaled by 1/keep_prob."""

    def __init__(self, keep_prob: float):
        if not 0.0 < keep_prob <= 1.0:
            raise ParameterError(f"keep_prob must be in (0, 1], got {keep_prob}")
        self.keep_prob = keep_prob
        self._mask = None

    def forward(self, x: np.ndarray, train: bool, rng) -> np.ndarray:
        if not train or self.keep_prob == 1.0:
            self._mask = None
            return x
        self._mask = (
            rng.random(x.shape) < self.keep_prob
        ).astype(np.float64) / self.keep_prob
        return x * self._mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return grad_out
        return grad_out * self._mask


def maxpool_points_forward(features: np.ndarray):
    """Max over the point axis of [B, N, F]; returns (pooled, argmax).

    Ties break toward the lowest point index (np.argmax convention), which
    keeps the backward pass deterministic.
    """
    features = as_f64(features)
    if features.ndim != 3:
        raise ShapeError(f"maxpool expects [B, N, F], got {features.shape}")
    if features.shape[1] == 0:
        raise ShapeError("maxpool over an empty point cloud")
    argmax = features.argmax(axis=1)
    pooled = np.take_along_axis(features, argmax[:, None, :], axis=1)[:, 0, :]
    return pooled, argmax


def maxpool_points_argmax(features: np.ndarray, pooled: np.ndarray):
    """Recover winner indices from features and their per-feature maxima.

    Equality against the max selects the first (lowest-index) occurrence,
    matching np.argmax tie breaking, and is cheaper than a direct strided
    argmax when the indices are only needed on the backward pass.
    """
    return (features == pooled[:, None, :]).argmax(axis=1)


def maxpool_points_backward(grad_out, argmax, n_points: int):
    grad_out = as_f64(grad_out)
    b, f = grad_out.shape
    grad = np.zeros((b, n_points, f))
    np.put_along_axis(grad, argmax[:, None, :], grad_out[:, None, :], axis=1)
    return grad


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch; returns (loss, grad wrt logits)."""
    logits = as_f64(logits)
    labels = np.asarray(labels)
    b, l = logits.shape
    if labels.shape != (b,):
        raise ShapeError(f"labels shape {labels.shape} vs batch {b}")
    if labels.min() < 0 or labels.max() >= l:
        raise ParameterError(
            f"labels must lie in [0, {l}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    z = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(z)
    loss = -log_probs[np.arange(b), labels].mean()
    grad = exp / z
    grad[np.arange(b), labels] -= 1.0
    grad /= b
    return loss, grad


def apply_transform(points: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Right-multiply every point row by its sample's d x d matrix."""
    points = as_f64(points)
    t = as_f64(t)
    if points.ndim != 3 or t.ndim != 3 or t.shape[1] != t.shape[2]:
        raise ShapeError(f"expected [B,N,d] and [B,d,d], got {points.shape}, {t.shape}")
    if points.shape[0] != t.shape[0] or points.shape[2] != t.shape[1]:
        raise ShapeError(
            f"points {points.shape} incompatible with transform {t.shape}"
        )
    return points @ t


def apply_transform_backward(points, t, grad_out):
    """Gradients of apply_transform wrt both inputs."""
    points = as_f64(points)
    t = as_f64(t)
    grad_out = as_f64(grad_out)
    grad_points = grad_out @ np.swapaxes(t, 1, 2)
    grad_t = np.swapaxes(points, 1, 2) @ grad_out
    return grad_points, grad_t


def check_finite(x: np.ndarray, what: str):
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")
