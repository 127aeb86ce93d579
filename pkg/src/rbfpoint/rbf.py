"""The trainable RBF feature-extraction layer.

A channel holds M kernels over one attribute slice of the input (e.g.
coordinates, or normals) and maps [B, N, d_attr] points to an [B, N, M]
activation map. Channels are concatenated along the feature axis by
MultiChannelRbf.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .kernels import Kernel, get_kernel
from .nn import ParameterError, ShapeError, as_f64

SIGMA_MIN = 1e-3
KMEANS_SAMPLE_CAP = 50_000

INIT_SCHEMES = ("uniform", "random", "kmeans", "overlap", "local")


@dataclass
class RbfChannel:
    """M kernels of one type, bound to a slice of the input attributes."""

    centers: np.ndarray  # [M, d]
    sigmas: np.ndarray  # [M]
    kernel_tag: str = "gaussian"
    train_centers: bool = True
    train_sigmas: bool = True
    grad_centers: np.ndarray = field(default=None)
    grad_sigmas: np.ndarray = field(default=None)

    def __post_init__(self):
        self.centers = as_f64(self.centers)
        self.sigmas = as_f64(self.sigmas)
        if self.centers.ndim != 2 or self.sigmas.shape != (self.centers.shape[0],):
            raise ShapeError(
                f"centers {self.centers.shape} / sigmas {self.sigmas.shape} "
                "must be [M, d] and [M]"
            )
        if np.any(self.sigmas <= 0):
            raise ParameterError("all kernel sizes must be positive")
        if self.grad_centers is None:
            self.grad_centers = np.zeros_like(self.centers)
        if self.grad_sigmas is None:
            self.grad_sigmas = np.zeros_like(self.sigmas)
        self._cache = None

    @property
    def kernel(self) -> Kernel:
        return get_kernel(self.kernel_tag)

    @property
    def m(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def num_params(self) -> int:
        return self.m * (self.dim + 1)

    def zero_grads(self):
        self.grad_centers.fill(0.0)
        self.grad_sigmas.fill(0.0)

    def forward(self, points: np.ndarray) -> np.ndarray:
        points = as_f64(points)
        if points.ndim != 3 or points.shape[2] != self.dim:
            raise ShapeError(
                f"rbf channel ({self.kernel_tag}, d={self.dim}) expects "
                f"[B, N, {self.dim}], got {points.shape}"
            )
        b, n, d = points.shape
        # |x - c|^2 = |x|^2 + |c|^2 - 2 x.c via one matmul; clamp fp cancellation
        flat = points.reshape(b * n, d)
        r2 = flat @ self.centers.T
        r2 *= -2.0
        r2 += np.einsum("ij,ij->i", flat, flat)[:, None]
        r2 += np.einsum("ij,ij->i", self.centers, self.centers)
        np.maximum(r2, 0.0, out=r2)
        r2 = r2.reshape(b, n, self.m)
        value = self.kernel.value(r2, self.sigmas)
        self._cache = (points, r2, value)
        return value

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise ShapeError("rbf backward called before forward")
        points, r2, value = self._cache
        grad_out = as_f64(grad_out)
        if grad_out.shape != value.shape:
            raise ShapeError(
                f"grad_out {grad_out.shape} vs activations {value.shape}"
            )
        w, dsigma = self.kernel.grads(r2, value, self.sigmas)
        if self.train_sigmas:
            self.grad_sigmas += np.einsum("bnm,bnm->m", grad_out, dsigma)
        gw = np.multiply(grad_out, w, out=w)  # [B, N, M]
        b, n, d = points.shape
        gw_flat = gw.reshape(b * n, self.m)
        flat = points.reshape(b * n, d)
        # sum_m gw * (x - c) split into a row-scaled term and a matmul
        row_sum = gw_flat.sum(axis=1)
        grad_points = flat * row_sum[:, None]
        grad_points -= gw_flat @ self.centers
        if self.train_centers:
            self.grad_centers -= gw_flat.T @ flat
            self.grad_centers += self.centers * gw_flat.sum(axis=0)[:, None]
        return grad_points.reshape(b, n, d)


def rbf_forward(points, ch: RbfChannel) -> np.ndarray:
    return ch.forward(points)


def rbf_backward(points, ch: RbfChannel, grad_out) -> np.ndarray:
    ch.forward(points)
    return ch.backward(grad_out)


class MultiChannelRbf:
    """Concatenation of RBF channels, each reading its own attribute slice."""

    def __init__(self, channels, slices):
        if len(channels) != len(slices):
            raise ShapeError("one attribute slice per channel required")
        for ch, (start, stop) in zip(channels, slices):
            if stop - start != ch.dim:
                raise ShapeError(
                    f"slice [{start}:{stop}] does not match channel dim {ch.dim}"
                )
        self.channels = list(channels)
        self.slices = [tuple(s) for s in slices]

    @property
    def out_dim(self) -> int:
        return sum(ch.m for ch in self.channels)

    def num_params(self) -> int:
        return sum(ch.num_params() for ch in self.channels)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = as_f64(x)
        for start, stop in self.slices:
            if start < 0 or stop > x.shape[2]:
                raise ShapeError(
                    f"attribute slice [{start}:{stop}] out of bounds for "
                    f"input width {x.shape[2]}"
                )
        return np.concatenate(
            [
                ch.forward(x[:, :, start:stop])
                for ch, (start, stop) in zip(self.channels, self.slices)
            ],
            axis=2,
        )

    def backward(self, grad_out: np.ndarray, input_width: int) -> np.ndarray:
        grad_out = as_f64(grad_out)
        b, n, _ = grad_out.shape
        grad_x = np.zeros((b, n, input_width))
        col = 0
        for ch, (start, stop) in zip(self.channels, self.slices):
            grad_x[:, :, start:stop] += ch.backward(grad_out[:, :, col : col + ch.m])
            col += ch.m
        return grad_x

    def zero_grads(self):
        for ch in self.channels:
            ch.zero_grads()


def multichannel_forward(x, mc: MultiChannelRbf) -> np.ndarray:
    return mc.forward(x)


def _sample_unit_ball(rng, m, d):
    v = rng.standard_normal((m, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    radii = rng.random(m) ** (1.0 / d)
    return v * radii[:, None]


def _sample_unit_sphere(rng, m, d):
    v = rng.standard_normal((m, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _lattice_centers(m, d):
    k = int(np.ceil(m ** (1.0 / d)))
    while k**d < m:  # guard float-root truncation
        k += 1
    axis = np.linspace(-1.0, 1.0, k) if k > 1 else np.array([0.0])
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    lattice = np.stack([g.ravel() for g in grids], axis=1)
    return lattice[:m].copy()


def kmeans(points, k, rng, max_iters=50):
    """Lloyd's algorithm with D^2-weighted (k-means++ style) seeding."""
    points = as_f64(points)
    n = points.shape[0]
    if k > n:
        raise ParameterError(f"kmeans needs at least k={k} points, got {n}")
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[i:] = centers[0]
            break
        idx = rng.choice(n, p=d2 / total)
        centers[i] = points[idx]
        d2 = np.minimum(d2, np.sum((points - centers[i]) ** 2, axis=1))
    assign = None
    for _ in range(max_iters):
        dist = (
            np.sum(points**2, axis=1)[:, None]
            - 2.0 * points @ centers.T
            + np.sum(centers**2, axis=1)[None, :]
        )
        new_assign = dist.argmin(axis=1)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            mask = assign == j
            if mask.any():
                centers[j] = points[mask].mean(axis=0)
            else:
                centers[j] = points[dist.min(axis=1).argmax()]
    return centers


def init_kernels(scheme, m, d, rng_seed, training_points=None, attribute="coords"):
    """Build (centers, sigmas) for one channel under a named scheme.

    `rng_seed` may be an integer seed or a numpy Generator. `training_points`
    (pooled [P, d] array) is required for the kmeans scheme only. For a
    normals attribute the random scheme samples centers on the unit sphere
    surface, matching the distribution of unit normals.
    """
    if m < 1:
        raise ParameterError(f"kernel count must be >= 1, got {m}")
    if scheme not in INIT_SCHEMES:
        raise ParameterError(
            f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}"
        )
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.default_rng(rng_seed)
    )
    if scheme == "random":
        if attribute == "normals":
            centers = _sample_unit_sphere(rng, m, d)
        else:
            centers = _sample_unit_ball(rng, m, d)
    elif scheme == "uniform":
        centers = _lattice_centers(m, d)
    elif scheme == "overlap":
        centers = np.zeros((m, d))
    elif scheme == "local":
        anchor = _sample_unit_sphere(rng, 1, d)[0]
        centers = anchor + 0.2 * _sample_unit_ball(rng, m, d)
    else:  # kmeans
        if training_points is None:
            raise ParameterError("kmeans init requires training points")
        pts = as_f64(training_points).reshape(-1, d)
        if pts.shape[0] > KMEANS_SAMPLE_CAP:
            idx = rng.choice(pts.shape[0], size=KMEANS_SAMPLE_CAP, replace=False)
            pts = pts[idx]
        centers = kmeans(pts, m, rng)
    sigmas = rng.uniform(0.01, 1.0, size=m)
    return centers, sigmas


def dump_kernels(mc: MultiChannelRbf, path):
    """Write every kernel as one CSV row: channel, c0..c{d-1}, sigma."""
    d = max(ch.dim for ch in mc.channels)
    if any(ch.dim != d for ch in mc.channels):
        raise ShapeError("kernel CSV dump requires equal dims across channels")
    with open(path, "w", newline="\n", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["channel"] + [f"c{i}" for i in range(d)] + ["sigma"])
        for ci, ch in enumerate(mc.channels):
            for j in range(ch.m):
                writer.writerow(
                    [ci]
                    + [f"{v:.17g}" for v in ch.centers[j]]
                    + [f"{ch.sigmas[j]:.17g}"]
                )


def load_kernels(path):
    """Read a kernel CSV dump; returns a list of (centers, sigmas) per channel."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header[0] != "channel" or header[-1] != "sigma":
            raise ParameterError(f"unrecognized kernel CSV header: {header}")
        d = len(header) - 2
        per_channel: dict[int, list] = {}
        for row in reader:
            if not row:
                continue
            ci = int(row[0])
            per_channel.setdefault(ci, []).append(
                [float(v) for v in row[1 : d + 2]]
            )
    out = []
    for ci in sorted(per_channel):
        rows = np.array(per_channel[ci])
        out.append((rows[:, :d].copy(), rows[:, d].copy()))
    return out
