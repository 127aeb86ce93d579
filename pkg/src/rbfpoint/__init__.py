"""Point-cloud classification with a trainable radial-basis-function layer."""

from .data import PointCloud, TriangleMesh
from .kernels import KernelEval, eval_gaussian, eval_imq, eval_markov, eval_multiquadratic
from .model import ChannelSpec, ModelSpec, Network, build, count_flops
from .optim import Adam, LrSchedule, evaluate, train_epoch
from .rbf import MultiChannelRbf, RbfChannel, init_kernels

__all__ = [
    "Adam",
    "ChannelSpec",
    "KernelEval",
    "LrSchedule",
    "ModelSpec",
    "MultiChannelRbf",
    "Network",
    "PointCloud",
    "RbfChannel",
    "TriangleMesh",
    "build",
    "count_flops",
    "eval_gaussian",
    "eval_imq",
    "eval_markov",
    "eval_multiquadratic",
    "evaluate",
    "init_kernels",
    "train_epoch",
]

__version__ = "0.1.0"
