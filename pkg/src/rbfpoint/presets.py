"""Canned experiment matrices mirroring the ablation studies.

Each preset expands deterministically into a list of ExperimentConfig
instances; the CLI can write them out, run them, and collect a summary
table from the per-run metrics files.
"""

from __future__ import annotations

import csv
import dataclasses
import os

from .config import ExperimentConfig, FREEZE_REGIMES
from .nn import ParameterError
from .rbf import INIT_SCHEMES

KERNEL_COUNT_SWEEP = (1, 2, 5, 10, 50, 100, 300, 1000)
KERNEL_TYPE_SWEEP = ("gaussian", "markov", "imq", "gaussian+markov", "gaussian+imq")


def _ablation_base(**overrides) -> ExperimentConfig:
    base = dict(
        dataset="shapes",
        n_points=256,
        shapes_train_per_class=32,
        shapes_test_per_class=16,
        epochs=30,
        augment_rotate=True,
        augment_jitter=0.01,
        use_transform=True,
        seed=0,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def preset_overfit32() -> list[ExperimentConfig]:
    # 32-cloud memorization check; dropout and augmentation off so the
    # training accuracy can actually saturate
    return [
        _ablation_base(
            name="overfit32",
            out_dir="runs/overfit32",
            variant="enhanced",
            m=64,
            n_points=128,
            shapes_train_per_class=8,
            shapes_test_per_class=8,
            epochs=200,
            keep_prob=1.0,
            augment_rotate=False,
            augment_jitter=0.0,
        )
    ]


def preset_mnist_small() -> list[ExperimentConfig]:
    # digits desk-scale recipe; in-plane rotation would alias 6 against 9,
    # so only jitter augmentation is applied
    return [
        ExperimentConfig(
            name="mnist-small",
            out_dir="runs/mnist-small",
            dataset="digits",
            generate_data=True,
            train_limit=10_000,
            test_limit=2_000,
            n_points=256,
            variant="enhanced",
            m=300,
            epochs=50,
            use_transform=False,
            augment_rotate=False,
            augment_jitter=0.01,
            seed=0,
        )
    ]


def preset_mnist_control() -> list[ExperimentConfig]:
    # same split without the RBF layer: raw coordinates straight into the
    # pooled classifier
    cfg = preset_mnist_small()[0]
    return [
        dataclasses.replace(
            cfg,
            name="mnist-control",
            out_dir="runs/mnist-control",
            variant="vanilla",
            use_rbf=False,
        )
    ]


def preset_kernel_count() -> list[ExperimentConfig]:
    return [
        _ablation_base(
            name=f"kcount-{variant}-m{m}",
            out_dir=f"runs/kernel-count/{variant}-m{m}",
            variant=variant,
            m=m,
        )
        for variant in ("vanilla", "enhanced")
        for m in KERNEL_COUNT_SWEEP
    ]


def preset_kernel_type() -> list[ExperimentConfig]:
    return [
        _ablation_base(
            name=f"ktype-{variant}-{tags.replace('+', '-')}",
            out_dir=f"runs/kernel-type/{variant}-{tags.replace('+', '-')}",
            variant=variant,
            kernels=tags,
            m=300,
        )
        for variant in ("vanilla", "enhanced")
        for tags in KERNEL_TYPE_SWEEP
    ]


def preset_freeze() -> list[ExperimentConfig]:
    return [
        _ablation_base(
            name=f"freeze-{variant}-{regime}",
            out_dir=f"runs/freeze/{variant}-{regime}",
            variant=variant,
            freeze=regime,
            m=300,
        )
        for variant in ("vanilla", "enhanced")
        for regime in FREEZE_REGIMES
    ]


def preset_init() -> list[ExperimentConfig]:
    return [
        _ablation_base(
            name=f"init-{variant}-{scheme}",
            out_dir=f"runs/init/{variant}-{scheme}",
            variant=variant,
            init=scheme,
            m=300,
        )
        for variant in ("vanilla", "enhanced")
        for scheme in INIT_SCHEMES
    ]


PRESETS = {
    "overfit32": preset_overfit32,
    "mnist-small": preset_mnist_small,
    "mnist-control": preset_mnist_control,
    "kernel-count": preset_kernel_count,
    "kernel-type": preset_kernel_type,
    "freeze": preset_freeze,
    "init": preset_init,
}


def expand_preset(name: str) -> list[ExperimentConfig]:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ParameterError(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}"
        ) from None
    return factory()


def write_summary(configs, results, path):
    """One row per finished run: name plus its final-epoch metrics."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["name", "epochs", "train_loss", "train_acc", "test_acc_instance", "test_acc_class"]
        )
        for cfg, stats in zip(configs, results):
            writer.writerow(
                [
                    cfg.name,
                    stats.epoch + 1,
                    f"{stats.train_loss:.6f}",
                    f"{stats.train_acc:.6f}",
                    f"{stats.test_acc_instance:.6f}",
                    f"{stats.test_acc_class:.6f}",
                ]
            )
