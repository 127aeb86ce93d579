"""Network assembly: spatial transformer, RBF feature layer, MLP head.

Two variants exist: "vanilla" (RBF features go straight to the max pool)
and "enhanced" (a shared per-point MLP of widths 16/128/1024 sits between
the RBF layer and the pool). Setting `use_rbf=False` yields the ablation
control that feeds raw coordinates to the rest of the pipeline.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .kernels import get_kernel
from .nn import ParameterError, ShapeError, as_f64
from .rbf import SIGMA_MIN, MultiChannelRbf, RbfChannel, init_kernels


class SpecError(ValueError):
    """Raised when a ModelSpec violates its own invariants."""


@dataclass
class ChannelSpec:
    kernel: str = "gaussian"
    m: int = 300
    start: int = 0
    stop: int = 3
    attribute: str = "coords"  # "coords" or "normals"; steers initialization


@dataclass
class ModelSpec:
    variant: str = "enhanced"
    input_dim: int = 3
    num_classes: int = 40
    use_transform: bool = True
    transform_normals: bool = False
    coord_dims: int | None = None  # width of the transformed slice
    channels: list = None
    shared_mlp_widths: list = None
    classifier_widths: list = field(default_factory=lambda: [512, 256])
    keep_prob: float = 0.7
    use_rbf: bool = True
    train_centers: bool = True
    train_sigmas: bool = True
    tnet_point_widths: list = field(default_factory=lambda: [64, 128, 1024])
    tnet_fc_widths: list = field(default_factory=lambda: [512, 256])

    def __post_init__(self):
        if self.coord_dims is None:
            self.coord_dims = min(3, self.input_dim)
        if self.channels is None:
            self.channels = [ChannelSpec(stop=self.input_dim)]
        self.channels = [
            ch if isinstance(ch, ChannelSpec) else ChannelSpec(**ch)
            for ch in self.channels
        ]
        if self.shared_mlp_widths is None:
            self.shared_mlp_widths = (
                [16, 128, 1024] if self.variant == "enhanced" else []
            )

    @property
    def feature_dim(self) -> int:
        """Width of the per-point feature map entering the shared MLP."""
        if not self.use_rbf:
            return self.input_dim
        return sum(ch.m for ch in self.channels)

    @property
    def global_feature_dim(self) -> int:
        if self.shared_mlp_widths:
            return self.shared_mlp_widths[-1]
        return self.feature_dim

    def validate(self):
        problems = []
        if self.variant not in ("vanilla", "enhanced"):
            problems.append(f"unknown variant {self.variant!r}")
        if self.variant == "vanilla" and self.shared_mlp_widths:
            problems.append("vanilla variant must have no shared MLP widths")
        if self.input_dim < 1:
            problems.append(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 2:
            problems.append(f"num_classes must be >= 2, got {self.num_classes}")
        if not 0.0 < self.keep_prob <= 1.0:
            problems.append(f"keep_prob must be in (0, 1], got {self.keep_prob}")
        if not 1 <= self.coord_dims <= self.input_dim:
            problems.append(
                f"coord_dims {self.coord_dims} out of range for input_dim "
                f"{self.input_dim}"
            )
        if self.use_rbf and not self.channels:
            problems.append("at least one RBF channel is required")
        for i, ch in enumerate(self.channels):
            if ch.m < 1:
                problems.append(f"channel {i}: kernel count {ch.m} < 1")
            if not 0 <= ch.start < ch.stop <= self.input_dim:
                problems.append(
                    f"channel {i}: slice [{ch.start}:{ch.stop}] out of bounds "
                    f"for input_dim {self.input_dim}"
                )
            try:
                get_kernel(ch.kernel)
            except ParameterError as e:
                problems.append(f"channel {i}: {e}")
        if problems:
            raise SpecError("invalid model spec: " + "; ".join(problems))

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls(**json.loads(text))


class PointwiseBlock:
    """Linear + batch norm + ReLU over 2-D row batches."""

    def __init__(self, in_dim, out_dim, rng):
        self.linear = nn.Linear(in_dim, out_dim, rng)
        self.bn = nn.BatchNorm(out_dim)
        self.relu = nn.Relu()

    def forward(self, x, train):
        return self.relu.forward(self.bn.forward(self.linear.forward(x), train))

    def backward(self, grad):
        return self.linear.backward(self.bn.backward(self.relu.backward(grad)))

    def zero_grads(self):
        self.linear.zero_grads()
        self.bn.zero_grads()


class TNet:
    """Predicts a d x d alignment matrix; outputs the identity at init."""

    def __init__(self, dim, point_widths, fc_widths, rng):
        self.dim = dim
        self.point_blocks = []
        w_in = dim
        for w in point_widths:
            self.point_blocks.append(PointwiseBlock(w_in, w, rng))
            w_in = w
        self.fc_blocks = []
        for w in fc_widths:
            self.fc_blocks.append(PointwiseBlock(w_in, w, rng))
            w_in = w
        self.final = nn.Linear(w_in, dim * dim)  # zero weights
        self.final.b = np.eye(dim).ravel().copy()
        self.final.gb = np.zeros_like(self.final.b)
        self._cache = None

    def forward(self, coords, train):
        b, n, d = coords.shape
        h = coords.reshape(b * n, d)
        for blk in self.point_blocks:
            h = blk.forward(h, train)
        feats = h.reshape(b, n, -1)
        pooled = feats.max(axis=1)
        self._cache = (b, n, feats, pooled, h.shape[1])
        g = pooled
        for blk in self.fc_blocks:
            g = blk.forward(g, train)
        return self.final.forward(g).reshape(b, d, d)

    def backward(self, grad_t):
        b, n, feats, pooled, width = self._cache
        g = self.final.backward(grad_t.reshape(b, -1))
        for blk in reversed(self.fc_blocks):
            g = blk.backward(g)
        argmax = nn.maxpool_points_argmax(feats, pooled)
        grad_h = nn.maxpool_points_backward(g, argmax, n).reshape(b * n, width)
        for blk in reversed(self.point_blocks):
            grad_h = blk.backward(grad_h)
        return grad_h.reshape(b, n, self.dim)

    def blocks(self):
        return self.point_blocks + self.fc_blocks


@dataclass
class ParamGroup:
    name: str
    param: np.ndarray
    grad: np.ndarray
    trainable: bool = True
    clamp_min: float | None = None


class Network:
    """A built model instance: parameters, forward/backward, persistence."""

    def __init__(self, spec: ModelSpec, seed=0, init_scheme="random", training_points=None):
        spec.validate()
        self.spec = spec
        rng = np.random.default_rng(seed)
        self.dropout_rng = np.random.default_rng(
            np.random.SeedSequence([int(seed), 0xD80])
        )

        self.tnet = None
        if spec.use_transform:
            self.tnet = TNet(
                spec.coord_dims, spec.tnet_point_widths, spec.tnet_fc_widths, rng
            )

        self.mc_rbf = None
        if spec.use_rbf:
            channels, slices = [], []
            for ch in spec.channels:
                d = ch.stop - ch.start
                centers, sigmas = init_kernels(
                    init_scheme,
                    ch.m,
                    d,
                    rng,
                    training_points=(
                        None
                        if training_points is None
                        else as_f64(training_points)[..., ch.start : ch.stop]
                    ),
                    attribute=ch.attribute,
                )
                channels.append(
                    RbfChannel(
                        centers,
                        sigmas,
                        kernel_tag=ch.kernel,
                        train_centers=spec.train_centers,
                        train_sigmas=spec.train_sigmas,
                    )
                )
                slices.append((ch.start, ch.stop))
            self.mc_rbf = MultiChannelRbf(channels, slices)

        self.shared_blocks = []
        w_in = spec.feature_dim
        for w in spec.shared_mlp_widths:
            self.shared_blocks.append(PointwiseBlock(w_in, w, rng))
            w_in = w
        self.classifier_blocks = []
        self.dropouts = []
        for w in spec.classifier_widths:
            self.classifier_blocks.append(PointwiseBlock(w_in, w, rng))
            self.dropouts.append(nn.Dropout(spec.keep_prob))
            w_in = w
        self.final = nn.Linear(w_in, spec.num_classes, rng, scale=np.sqrt(1.0 / w_in))
        self._cache = None

    # ---- forward / backward ----

    def forward(self, points, train=False):
        points = as_f64(points)
        if points.ndim != 3 or points.shape[2] != self.spec.input_dim:
            raise ShapeError(
                f"expected [B, N, {self.spec.input_dim}], got {points.shape}"
            )
        b, n, dt = points.shape
        if n == 0:
            raise ShapeError("empty point cloud")
        dc = self.spec.coord_dims
        x = points
        coords = t = None
        if self.tnet is not None:
            coords = points[:, :, :dc]
            t = self.tnet.forward(coords, train)
            tc = nn.apply_transform(coords, t)
            x = (
                tc
                if dc == dt
                else np.concatenate([tc, points[:, :, dc:]], axis=2)
            )
        feats = self.mc_rbf.forward(x) if self.mc_rbf is not None else x
        width = feats.shape[2]
        h = feats.reshape(b * n, width)
        for blk in self.shared_blocks:
            h = blk.forward(h, train)
        point_feats = h.reshape(b, n, -1)
        pooled = point_feats.max(axis=1)
        g = pooled
        for blk, drop in zip(self.classifier_blocks, self.dropouts):
            g = blk.forward(g, train)
            g = drop.forward(g, train, self.dropout_rng)
        logits = self.final.forward(g)
        self._cache = (b, n, dt, coords, t, point_feats, pooled)
        return logits

    def backward(self, grad_logits):
        if self._cache is None:
            raise ShapeError("backward called before forward")
        b, n, dt, coords, t, point_feats, pooled = self._cache
        pool_width = pooled.shape[1]
        g = self.final.backward(as_f64(grad_logits))
        for blk, drop in zip(
            reversed(self.classifier_blocks), reversed(self.dropouts)
        ):
            g = drop.backward(g)
            g = blk.backward(g)
        argmax = nn.maxpool_points_argmax(point_feats, pooled)
        grad_h = nn.maxpool_points_backward(g, argmax, n)
        grad_h = grad_h.reshape(b * n, pool_width)
        for blk in reversed(self.shared_blocks):
            grad_h = blk.backward(grad_h)
        grad_feats = grad_h.reshape(b, n, -1)
        if self.mc_rbf is not None:
            grad_x = self.mc_rbf.backward(grad_feats, dt)
        else:
            grad_x = grad_feats
        if self.tnet is not None:
            dc = self.spec.coord_dims
            grad_tc = grad_x[:, :, :dc]
            grad_coords, grad_t = nn.apply_transform_backward(coords, t, grad_tc)
            grad_coords = grad_coords + self.tnet.backward(grad_t)
            grad_in = grad_x.copy()
            grad_in[:, :, :dc] = grad_coords
            return grad_in
        return grad_x

    # ---- parameters ----

    def _blocks(self):
        named = []
        if self.tnet is not None:
            for i, blk in enumerate(self.tnet.blocks()):
                named.append((f"tnet.block{i}", blk))
        for i, blk in enumerate(self.shared_blocks):
            named.append((f"shared.block{i}", blk))
        for i, blk in enumerate(self.classifier_blocks):
            named.append((f"classifier.block{i}", blk))
        return named

    def param_groups(self):
        groups = []
        if self.mc_rbf is not None:
            for i, ch in enumerate(self.mc_rbf.channels):
                groups.append(
                    ParamGroup(
                        f"rbf.ch{i}.centers",
                        ch.centers,
                        ch.grad_centers,
                        trainable=ch.train_centers,
                    )
                )
                groups.append(
                    ParamGroup(
                        f"rbf.ch{i}.sigmas",
                        ch.sigmas,
                        ch.grad_sigmas,
                        trainable=ch.train_sigmas,
                        clamp_min=SIGMA_MIN,
                    )
                )
        for name, blk in self._blocks():
            groups.append(ParamGroup(f"{name}.w", blk.linear.w, blk.linear.gw))
            groups.append(ParamGroup(f"{name}.b", blk.linear.b, blk.linear.gb))
            groups.append(ParamGroup(f"{name}.gamma", blk.bn.gamma, blk.bn.ggamma))
            groups.append(ParamGroup(f"{name}.beta", blk.bn.beta, blk.bn.gbeta))
        finals = [("final", self.final)]
        if self.tnet is not None:
            finals.append(("tnet.final", self.tnet.final))
        for name, lin in finals:
            groups.append(ParamGroup(f"{name}.w", lin.w, lin.gw))
            groups.append(ParamGroup(f"{name}.b", lin.b, lin.gb))
        return groups

    def zero_grads(self):
        for g in self.param_groups():
            g.grad.fill(0.0)

    def count_params(self):
        counts = {"rbf": 0, "tnet": 0, "shared_mlp": 0, "classifier": 0, "batchnorm": 0}
        if self.mc_rbf is not None:
            counts["rbf"] = self.mc_rbf.num_params()
        for name, blk in self._blocks():
            key = name.split(".")[0].replace("shared", "shared_mlp")
            counts[key] += blk.linear.w.size + blk.linear.b.size
            counts["batchnorm"] += blk.bn.gamma.size + blk.bn.beta.size
        counts["classifier"] += self.final.w.size + self.final.b.size
        if self.tnet is not None:
            counts["tnet"] += self.tnet.final.w.size + self.tnet.final.b.size
        counts["total"] = sum(counts.values())
        return counts

    # ---- persistence ----

    def state_arrays(self):
        arrays = [(g.name, g.param) for g in self.param_groups()]
        for name, blk in self._blocks():
            arrays.append((f"{name}.running_mean", blk.bn.running_mean))
            arrays.append((f"{name}.running_var", blk.bn.running_var))
        return arrays

    CHECKPOINT_MAGIC = b"RBFPCKPT"
    CHECKPOINT_VERSION = 1

    def save(self, path):
        """Byte-deterministic binary container: spec JSON + shape-tagged arrays."""
        import struct

        with open(path, "wb") as f:
            f.write(self.CHECKPOINT_MAGIC)
            f.write(struct.pack("<I", self.CHECKPOINT_VERSION))
            spec_bytes = self.spec.to_json().encode()
            f.write(struct.pack("<Q", len(spec_bytes)))
            f.write(spec_bytes)
            arrays = self.state_arrays()
            f.write(struct.pack("<Q", len(arrays)))
            for name, arr in arrays:
                name_bytes = name.encode()
                f.write(struct.pack("<Q", len(name_bytes)))
                f.write(name_bytes)
                f.write(struct.pack("<Q", arr.ndim))
                f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
                f.write(np.ascontiguousarray(arr, dtype=np.float64).tobytes())

    @classmethod
    def load(cls, path):
        import struct

        with open(path, "rb") as f:
            if f.read(8) != cls.CHECKPOINT_MAGIC:
                raise ParameterError(f"{path} is not a model checkpoint")
            (version,) = struct.unpack("<I", f.read(4))
            if version != cls.CHECKPOINT_VERSION:
                raise ParameterError(f"unsupported checkpoint version {version}")
            (spec_len,) = struct.unpack("<Q", f.read(8))
            spec = ModelSpec.from_json(f.read(spec_len).decode())
            net = cls(spec, seed=0)
            expected = dict(net.state_arrays())
            (n_arrays,) = struct.unpack("<Q", f.read(8))
            for _ in range(n_arrays):
                (name_len,) = struct.unpack("<Q", f.read(8))
                name = f.read(name_len).decode()
                (ndim,) = struct.unpack("<Q", f.read(8))
                shape = struct.unpack(f"<{ndim}Q", f.read(8 * ndim))
                count = int(np.prod(shape)) if ndim else 1
                values = np.frombuffer(f.read(8 * count), dtype=np.float64)
                if name not in expected:
                    raise ParameterError(f"unknown checkpoint array {name!r}")
                arr = expected[name]
                if tuple(shape) != arr.shape:
                    raise ShapeError(
                        f"checkpoint array {name} has shape {shape}, "
                        f"expected {arr.shape}"
                    )
                arr[...] = values.reshape(shape)
        return net


def build(spec: ModelSpec, rng_seed=0, init_scheme="random", training_points=None):
    return Network(spec, rng_seed, init_scheme, training_points)


def count_flops(spec: ModelSpec, n: int):
    """Per-sample floating point operation count for inference.

    Convention: every multiply, add, subtract, division, comparison, exp and
    sqrt counts as one operation. A kernel evaluation on a d-dimensional
    input costs 3d+1 for Gaussian (d subs, d mults, d-1 adds, 1 division,
    1 exp), 3d+2 Markov, 3d+4 inverse multiquadratic, 3d+3 multiquadratic.
    A linear layer of shape [in, out] costs 2*in*out per row (bias add
    included), batch norm 4 per element, ReLU and max-pool 1 per
    comparison. The softmax is excluded (inference stops at logits).
    Returns a dict of per-stage subtotals plus "total".
    """
    spec.validate()

    def mlp_chain(rows, widths, w_in):
        ops = 0
        for w in widths:
            ops += rows * (2 * w_in * w + 4 * w + w)  # linear + bn + relu
            w_in = w
        return ops, w_in

    counts = {}
    dc = spec.coord_dims
    if spec.use_transform:
        ops, w = mlp_chain(n, spec.tnet_point_widths, dc)
        ops += (n - 1) * w  # max pool
        ops_fc, w = mlp_chain(1, spec.tnet_fc_widths, w)
        ops += ops_fc + 2 * w * dc * dc  # final linear
        ops += n * 2 * dc * dc  # applying the matrix to every point
        counts["transform"] = ops
    if spec.use_rbf:
        counts["rbf"] = n * sum(
            ch.m * get_kernel(ch.kernel).flops_per_eval(ch.stop - ch.start)
            for ch in spec.channels
        )
    ops, w = mlp_chain(n, spec.shared_mlp_widths, spec.feature_dim)
    if ops:
        counts["shared_mlp"] = ops
    counts["pool"] = (n - 1) * spec.global_feature_dim
    ops, w = mlp_chain(1, spec.classifier_widths, spec.global_feature_dim)
    counts["classifier"] = ops + 2 * w * spec.num_classes
    counts["total"] = sum(counts.values())
    return counts
