"""Experiment configuration: a flat, typed key=value text format.

Every run is described by an ExperimentConfig. The serialization is one
`key=value` line per field, sorted by key; parsing rejects unknown keys so
stale config files fail loudly.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

from .data import AugmentConfig
from .model import ChannelSpec, ModelSpec
from .nn import ParameterError

FREEZE_REGIMES = ("optim_both", "fix_center", "fix_size", "fix_both")

DATA_ROOT_ENV = "RBFPOINT_DATA"


@dataclass
class ExperimentConfig:
    name: str = "run"
    seed: int = 0
    out_dir: str = "runs/run"

    # dataset
    dataset: str = "shapes"  # "shapes" (procedural meshes) or "digits" (IDX)
    data_dir: str = ""  # digits only; falls back to $RBFPOINT_DATA
    generate_data: bool = False  # digits: synthesize the IDX corpus if absent
    train_limit: int = 0  # 0 = no limit
    test_limit: int = 0
    n_points: int = 256
    with_normals: bool = False
    shapes_train_per_class: int = 32
    shapes_test_per_class: int = 16

    # model
    variant: str = "enhanced"
    kernels: str = "gaussian"  # "+"-separated tags split the kernel budget
    m: int = 300
    init: str = "random"
    freeze: str = "optim_both"
    use_transform: bool = True
    use_rbf: bool = True
    keep_prob: float = 0.7

    # training
    epochs: int = 250
    batch_size: int = 32
    base_lr: float = 2e-4
    lr_decay: float = 0.7
    lr_interval: int = 20
    augment_rotate: bool = True
    augment_jitter: float = 0.01
    test_augment: bool = False
    record_time: bool = True

    def validate(self):
        if self.dataset not in ("shapes", "digits"):
            raise ParameterError(f"unknown dataset {self.dataset!r}")
        if self.freeze not in FREEZE_REGIMES:
            raise ParameterError(
                f"unknown freeze regime {self.freeze!r}; expected one of "
                f"{FREEZE_REGIMES}"
            )
        self.model_spec().validate()

    def resolved_data_dir(self) -> str:
        if self.data_dir:
            return self.data_dir
        return os.environ.get(DATA_ROOT_ENV, "")

    @property
    def coord_dims(self) -> int:
        return 2 if self.dataset == "digits" else 3

    @property
    def num_classes(self) -> int:
        return 10 if self.dataset == "digits" else 4

    def model_spec(self) -> ModelSpec:
        dc = self.coord_dims
        tags = self.kernels.split("+")
        per = [self.m // len(tags)] * len(tags)
        per[0] += self.m - sum(per)
        channels = [
            ChannelSpec(kernel=t, m=k, start=0, stop=dc) for t, k in zip(tags, per)
        ]
        input_dim = dc
        if self.with_normals:
            channels.append(
                ChannelSpec(
                    kernel=tags[0], m=self.m, start=dc, stop=dc + 3, attribute="normals"
                )
            )
            input_dim += 3
        return ModelSpec(
            variant=self.variant,
            input_dim=input_dim,
            num_classes=self.num_classes,
            use_transform=self.use_transform,
            coord_dims=dc,
            channels=channels,
            shared_mlp_widths=None,
            keep_prob=self.keep_prob,
            use_rbf=self.use_rbf,
            train_centers=self.freeze in ("optim_both", "fix_size"),
            train_sigmas=self.freeze in ("optim_both", "fix_center"),
        )

    def augment_config(self) -> AugmentConfig | None:
        if not self.augment_rotate and self.augment_jitter == 0.0:
            return None
        return AugmentConfig(
            rotate=self.augment_rotate, jitter_std=self.augment_jitter
        )

    def serialize(self) -> str:
        lines = []
        for f in sorted(dataclasses.fields(self), key=lambda f: f.name):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _convert(field_obj, raw: str):
    ftype = field_obj.type
    if ftype in ("bool", bool):
        if raw not in ("true", "false"):
            raise ParameterError(
                f"key {field_obj.name!r} expects true/false, got {raw!r}"
            )
        return raw == "true"
    if ftype in ("int", int):
        return int(raw)
    if ftype in ("float", float):
        return float(raw)
    return raw


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParameterError(f"config line {lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ParameterError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise ParameterError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = _convert(_FIELDS[key], raw.strip())
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read())


def save_config(cfg: ExperimentConfig, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(cfg.serialize())
