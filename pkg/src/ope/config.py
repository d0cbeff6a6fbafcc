"""Run configuration: one JSON document, unknown keys rejected."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

from .losses import LossConfig
from .samplers import SamplerConfig


class ConfigError(ValueError):
    pass


DATASET_KINDS = ("moons", "moons_ring", "two_disks", "gaussian_mixture", "csv")


@dataclass
class DatasetSpec:
    kind: str = "moons"
    seed: int = 0  # fixes generation and the train/test split for every trial
    n: int = 2000
    noise: float = 0.1
    # moons_ring: negatives uniform on a circle
    n_negative: int = 200
    ring_radius: float = 0.5
    ring_center: list = field(default_factory=lambda: [0.5, 0.25])
    # two_disks
    radius: float = 1.0
    centers: list = field(default_factory=lambda: [[-2.0, 0.0], [2.0, 0.0]])
    # gaussian_mixture: {"positive": {...}, "negative": {...}}
    mixture: dict | None = None
    # csv
    path: str | None = None
    test_path: str | None = None
    label_column: str | int = "label"
    class_column: str | int | None = None

    test_fraction: float = 0.5
    subsample: dict | None = None  # {"count": k} or {"classes": n, "per_class": cap}
    test_anomalies: str = "native"  # native | uniform_box
    n_test_anomalies: int | None = None
    standardize: bool = True
    # None: box around the positive training rows with 10% margin;
    # {"margin": x} or {"lo": [...], "hi": [...]} in model (post-standardization) space
    domain: dict | None = None

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"dataset.kind must be one of {DATASET_KINDS}, got {self.kind!r}")
        if self.test_anomalies not in ("native", "uniform_box"):
            raise ConfigError("dataset.test_anomalies must be 'native' or 'uniform_box'")
        if self.kind == "csv" and not self.path:
            raise ConfigError("dataset.path is required for csv datasets")
        if self.kind == "gaussian_mixture" and not self.mixture:
            raise ConfigError("dataset.mixture is required for gaussian_mixture datasets")
        if self.kind != "csv" and self.n < 2:
            raise ConfigError("dataset.n must be >= 2")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("dataset.test_fraction must lie in (0, 1)")


@dataclass
class ModelSpec:
    hidden: list = field(default_factory=lambda: [64, 64, 64, 64])
    activation: str = "tanh"

    def __post_init__(self):
        if any(int(h) < 1 for h in self.hidden):
            raise ConfigError("model.hidden sizes must be >= 1")
        if self.activation not in ("tanh", "relu"):
            raise ConfigError("model.activation must be 'tanh' or 'relu'")


@dataclass
class OptimizerSpec:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class TrainingSpec:
    batch_size: int = 128
    max_steps: int = 3000
    seed: int = 0
    convergence_window: int = 200
    convergence_tol: float | None = 1e-5  # None disables the plateau test

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("training.batch_size must be >= 1")
        if self.max_steps < 0:
            raise ConfigError("training.max_steps must be >= 0")
        if self.convergence_window < 1:
            raise ConfigError("training.convergence_window must be >= 1")


@dataclass
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    loss: LossConfig = field(default_factory=LossConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    training: TrainingSpec = field(default_factory=TrainingSpec)
    out: str | None = None

    def __post_init__(self):
        if self.loss.variant == "eope" and self.sampler.kind == "uniform":
            raise ConfigError("eope needs an MCMC or generator sampler, not 'uniform'")

    def to_dict(self):
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        """Hash of the canonical config, excluding the output directory."""
        d = self.to_dict()
        d.pop("out", None)
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def replace(self, **sections):
        """Copy with whole sections or dotted-path overrides, e.g. ``{"loss.epsilon": 1.0}``."""
        d = self.to_dict()
        for key, value in sections.items():
            parts = key.split(".")
            target = d
            for p in parts[:-1]:
                target = target[p]
            target[parts[-1]] = value
        return config_from_dict(d)


_SECTIONS = {
    "dataset": DatasetSpec,
    "model": ModelSpec,
    "loss": LossConfig,
    "sampler": SamplerConfig,
    "optimizer": OptimizerSpec,
    "training": TrainingSpec,
}


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    try:
        return cls(**d)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(d: dict) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(d) - set(_SECTIONS) - {"out"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    sections = {name: _build(cls, d.get(name, {}), name) for name, cls in _SECTIONS.items()}
    try:
        return RunConfig(**sections, out=d.get("out"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    cfg = config_from_dict(d)
    base = os.path.dirname(os.path.abspath(path))
    for attr in ("path", "test_path"):
        p = getattr(cfg.dataset, attr)
        if p and not os.path.isabs(p):
            setattr(cfg.dataset, attr, os.path.join(base, p))
        p = getattr(cfg.dataset, attr)
        if p and not os.path.exists(p):
            raise ConfigError(f"dataset.{attr} does not exist: {p}")
    return cfg
