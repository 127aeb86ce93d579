"""Training/evaluation orchestration shared by the CLI and the test suite."""

from __future__ import annotations

import json
import os

import numpy as np

from . import synth
from .config import ExperimentConfig, save_config
from .data import Dataset, PointCloud, corrupt_dropout, corrupt_noise
from .model import Network, build
from .nn import ParameterError
from .optim import Adam, EpochStats, LrSchedule, evaluate, train_epoch

CHECKPOINT_NAME = "checkpoint.ckpt"
METRICS_NAME = "metrics.csv"
BEST_NAME = "best.json"


class MissingDataError(RuntimeError):
    """Dataset files are required but no usable path was supplied."""


def load_datasets(cfg: ExperimentConfig):
    """Materialize (train, test) datasets for a config."""
    if cfg.dataset == "shapes":
        train = synth.make_shape_dataset(
            n_per_class=cfg.shapes_train_per_class,
            n_points=cfg.n_points,
            seed=cfg.seed,
            with_normals=cfg.with_normals,
        )
        test = synth.make_shape_dataset(
            n_per_class=cfg.shapes_test_per_class,
            n_points=cfg.n_points,
            seed=cfg.seed + 1_000_003,
            with_normals=cfg.with_normals,
        )
        return train, test

    idx_dir = cfg.resolved_data_dir()
    if not idx_dir:
        if not cfg.generate_data:
            raise MissingDataError(
                "digits dataset needs data_dir=..., $RBFPOINT_DATA, or "
                "generate_data=true"
            )
        idx_dir = os.path.join("data", "digits")
    probe = os.path.join(idx_dir, "train-images-idx3-ubyte")
    if not os.path.exists(probe):
        if not cfg.generate_data:
            raise MissingDataError(f"no IDX corpus found under {idx_dir!r}")
        synth.make_digit_corpus(
            idx_dir,
            n_train=max(cfg.train_limit, 10_000),
            n_test=max(cfg.test_limit, 2_000),
            seed=0,
        )
    train = synth.load_digit_dataset(
        idx_dir,
        "train",
        limit=cfg.train_limit or None,
        n_points=cfg.n_points,
        seed=cfg.seed,
    )
    test = synth.load_digit_dataset(
        idx_dir,
        "test",
        limit=cfg.test_limit or None,
        n_points=cfg.n_points,
        seed=cfg.seed + 1,
    )
    return train, test


def run_training(cfg: ExperimentConfig, log=None):
    """Full training run; writes metrics, config copy, and best checkpoint.

    Returns (network, per-epoch stats list).
    """
    cfg.validate()
    train, test = load_datasets(cfg)
    spec = cfg.model_spec()
    net = build(
        spec,
        rng_seed=cfg.seed,
        init_scheme=cfg.init,
        training_points=train.x if cfg.init == "kmeans" else None,
    )
    optimizer = Adam(net.param_groups())
    schedule = LrSchedule(cfg.base_lr, cfg.lr_decay, cfg.lr_interval)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7EA1]))

    os.makedirs(cfg.out_dir, exist_ok=True)
    save_config(cfg, os.path.join(cfg.out_dir, "config.cfg"))
    metrics_path = os.path.join(cfg.out_dir, METRICS_NAME)
    with open(metrics_path, "w", encoding="utf-8") as f:
        f.write(EpochStats.HEADER + "\n")

    aug = cfg.augment_config()
    test_aug = aug if cfg.test_augment else None
    best = -np.inf
    history = []
    for epoch in range(cfg.epochs):
        stats = train_epoch(
            net,
            optimizer,
            train,
            epoch,
            schedule.lr_at(epoch),
            rng,
            batch_size=cfg.batch_size,
            augment_cfg=aug,
            test_set=test,
            test_augment_cfg=test_aug,
            record_time=cfg.record_time,
        )
        history.append(stats)
        with open(metrics_path, "a", encoding="utf-8") as f:
            f.write(stats.to_line() + "\n")
        if log is not None:
            log(
                f"[{cfg.name}] epoch {epoch}: loss {stats.train_loss:.4f} "
                f"train {stats.train_acc:.4f} test {stats.test_acc_instance:.4f}"
            )
        if stats.test_acc_instance > best:
            best = stats.test_acc_instance
            net.save(os.path.join(cfg.out_dir, CHECKPOINT_NAME))
            with open(os.path.join(cfg.out_dir, BEST_NAME), "w", encoding="utf-8") as f:
                json.dump(
                    {
                        "epoch": epoch,
                        "test_acc_instance": stats.test_acc_instance,
                        "test_acc_class": stats.test_acc_class,
                    },
                    f,
                )
    return net, history


def parse_corruption(text: str):
    """Parse 'dropout:F' or 'noise:STD' corruption specs."""
    kind, _, value = text.partition(":")
    if kind not in ("dropout", "noise") or not value:
        raise ParameterError(
            f"corruption must look like dropout:F or noise:STD, got {text!r}"
        )
    return kind, float(value)


def apply_corruption(dataset: Dataset, kind: str, value: float, seed=0) -> Dataset:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC0]))
    dc = dataset.coord_dims
    clouds = []
    for i in range(len(dataset)):
        normals = dataset.x[i, :, dc:] if dataset.has_normals else None
        cloud = PointCloud(dataset.x[i, :, :dc], normals, int(dataset.y[i]))
        if kind == "dropout":
            cloud = corrupt_dropout(cloud, value, rng)
        else:
            cloud = corrupt_noise(cloud, value, rng)
        clouds.append(cloud)
    from .data import pack_clouds

    return pack_clouds(clouds, with_normals=dataset.has_normals)


def eval_checkpoint(checkpoint_path, dataset: Dataset, corruptions=(), seed=0):
    """Accuracy report rows: (corruption label, instance acc, class acc)."""
    net = Network.load(checkpoint_path)
    rows = []
    specs = list(corruptions) or [None]
    for spec in specs:
        ds = dataset
        label = "none"
        if spec is not None:
            kind, value = spec
            ds = apply_corruption(dataset, kind, value, seed=seed)
            label = f"{kind}:{value:g}"
        instance, per_class = evaluate(net, ds)
        rows.append((label, instance, per_class))
    return rows
