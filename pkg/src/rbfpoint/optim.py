"""Adam optimizer, the stepped learning-rate schedule, and the epoch loop."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import AugmentConfig, Dataset, augment_batch
from .nn import ParameterError, softmax_cross_entropy


class Adam:
    """Bias-corrected Adam over named parameter groups.

    Frozen groups are skipped entirely (their moments are never touched).
    Groups carrying a `clamp_min` (the kernel sizes) are clamped from below
    after every update.
    """

    def __init__(self, groups, beta1=0.9, beta2=0.999, eps=1e-8):
        self.groups = list(groups)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {g.name: np.zeros_like(g.param) for g in self.groups}
        self.v = {g.name: np.zeros_like(g.param) for g in self.groups}

    def step(self, lr: float):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correction1 = 1.0 - b1**self.t
        correction2 = 1.0 - b2**self.t
        for g in self.groups:
            if not g.trainable:
                continue
            if not np.all(np.isfinite(g.grad)):
                raise FloatingPointError(f"non-finite gradient in group {g.name}")
            m = self.m[g.name]
            v = self.v[g.name]
            m *= b1
            m += (1.0 - b1) * g.grad
            v *= b2
            v += (1.0 - b2) * g.grad**2
            g.param -= lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            if g.clamp_min is not None:
                np.maximum(g.param, g.clamp_min, out=g.param)


def adam_step(optimizer: Adam, lr: float):
    optimizer.step(lr)


@dataclass
class LrSchedule:
    base_lr: float = 2e-4
    decay: float = 0.7
    interval: int = 20
    floor: float = 1e-6

    def lr_at(self, epoch: int) -> float:
        return max(self.floor, self.base_lr * self.decay ** (epoch // self.interval))


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    return schedule.lr_at(epoch)


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    test_acc_instance: float
    test_acc_class: float
    seconds: float

    def to_line(self) -> str:
        return (
            f"{self.epoch},{self.lr:.17g},{self.train_loss:.17g},"
            f"{self.train_acc:.17g},{self.test_acc_instance:.17g},"
            f"{self.test_acc_class:.17g},{self.seconds:.6f}"
        )

    HEADER = "epoch,lr,train_loss,train_acc,test_acc_instance,test_acc_class,seconds"

    @classmethod
    def from_line(cls, line: str) -> "EpochStats":
        parts = line.strip().split(",")
        return cls(
            int(parts[0]),
            *(float(p) for p in parts[1:6]),
            seconds=float(parts[6]),
        )


def class_accuracy(labels, predictions, num_classes) -> float:
    """Unweighted mean of per-class recalls over classes present in `labels`."""
    recalls = []
    for c in range(num_classes):
        mask = labels == c
        if mask.any():
            recalls.append(float((predictions[mask] == c).mean()))
    return float(np.mean(recalls))


def evaluate(net, dataset: Dataset, batch_size=64, augment_cfg=None, rng=None):
    """Eval-mode accuracy; returns (instance_acc, class_acc)."""
    predictions = np.empty(len(dataset), dtype=np.int64)
    for start in range(0, len(dataset), batch_size):
        xb = dataset.x[start : start + batch_size]
        if augment_cfg is not None:
            xb = augment_batch(xb, dataset.coord_dims, rng, augment_cfg)
        logits = net.forward(xb, train=False)
        predictions[start : start + xb.shape[0]] = logits.argmax(axis=1)
    instance = float((predictions == dataset.y).mean())
    return instance, class_accuracy(dataset.y, predictions, net.spec.num_classes)


def train_epoch(
    net,
    optimizer: Adam,
    dataset: Dataset,
    epoch: int,
    lr: float,
    rng,
    batch_size: int = 32,
    augment_cfg: AugmentConfig | None = None,
    test_set: Dataset | None = None,
    test_augment_cfg: AugmentConfig | None = None,
    record_time: bool = True,
) -> EpochStats:
    """One seeded pass over the dataset: shuffle, augment, step per batch.

    Fully deterministic given the generator state. Trailing batches of a
    single sample are skipped (batch norm needs two rows).
    """
    if len(dataset) == 0:
        raise ParameterError("cannot train on an empty dataset")
    start_time = time.perf_counter()
    perm = rng.permutation(len(dataset))
    total_loss = 0.0
    total_correct = 0
    total_seen = 0
    for start in range(0, len(perm), batch_size):
        idx = perm[start : start + batch_size]
        if len(idx) < 2:
            continue
        xb = dataset.x[idx]
        if augment_cfg is not None:
            xb = augment_batch(xb, dataset.coord_dims, rng, augment_cfg)
        yb = dataset.y[idx]
        logits = net.forward(xb, train=True)
        loss, grad = softmax_cross_entropy(logits, yb)
        net.zero_grads()
        net.backward(grad)
        optimizer.step(lr)
        total_loss += loss * len(idx)
        total_correct += int((logits.argmax(axis=1) == yb).sum())
        total_seen += len(idx)
    test_instance = test_class = float("nan")
    if test_set is not None:
        test_instance, test_class = evaluate(
            net, test_set, augment_cfg=test_augment_cfg, rng=rng
        )
    seconds = time.perf_counter() - start_time if record_time else 0.0
    return EpochStats(
        epoch=epoch,
        lr=lr,
        train_loss=total_loss / total_seen,
        train_acc=total_correct / total_seen,
        test_acc_instance=test_instance,
        test_acc_class=test_class,
        seconds=seconds,
    )
