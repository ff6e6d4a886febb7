"""Experiment configuration files (YAML) and model identifiers.

A config file looks like::

    experiment:
      name: experiment-1
      kind: sweep              # or noise_comparison
    dataset:
      builtin: linear          # linear | wine | diabetes
      # csv: data/concrete.csv ; target: -1 ; task: regression
    models: [FM, Bag_0.3_0.2, Bag_0.8_1.0, AdaBoost]
    layers: [1, 2, 3]          # or "1-10"
    repeats: 10
    seed: 0
    backend:
      kind: exact              # exact | shots | noisy
      shots: 1024
      single_qubit_error: 2.89e-4
      two_qubit_error: 8.63e-3
      trajectories: 16
    train:
      learning_rate: 0.1
      epochs: 150
    ensemble:
      n_estimators: 10
      rounding: floor
    output: results/experiment-1

Model ids: ``FM`` (single QNN on all features), ``Bag_<rf>_<rn>`` (bagging
with feature ratio ``rf`` and sample ratio ``rn``) and ``AdaBoost``
(AdaBoost.R2 for regression, SAMME.R for classification).
"""
from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..errors import ConfigurationError
from ..optim import TrainConfig
from ..qnn import Backend
from ..simcore import NoiseModel, LAGOS_SINGLE_QUBIT_ERROR, LAGOS_TWO_QUBIT_ERROR, LAGOS_TOPOLOGY

OUTPUT_ENV = "QENSEMBLE_OUT"
DEFAULT_MODELS = ("FM", "Bag_0.3_0.2", "Bag_0.3_1.0", "Bag_0.5_0.2", "Bag_0.5_1.0",
                "Bag_0.8_0.2", "Bag_0.8_1.0", "AdaBoost")
_BAG_RE = re.compile(r"^Bag_(?P<rf>[0-9.]+)_(?P<rn>[0-9.]+)$")


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    kind: str  # fm | bagging | adaboost
    feature_ratio: float = 1.0
    sample_ratio: float = 1.0

    @classmethod
    def parse(cls, model_id: str) -> "ModelSpec":
        if model_id == "FM":
            return cls("FM", "fm")
        if model_id == "AdaBoost":
            return cls("AdaBoost", "adaboost")
        m = _BAG_RE.match(model_id)
        if not m:
            raise ConfigurationError(f"invalid model id {model_id!r} (FM, Bag_<rf>_<rn>, AdaBoost)")
        rf, rn = float(m["rf"]), float(m["rn"])
        if not (0 < rf <= 1 and 0 < rn <= 1):
            raise ConfigurationError(f"ratios of {model_id!r} must be in (0, 1]")
        return cls(model_id, "bagging", rf, rn)


@dataclass(frozen=True)
class DatasetSpec:
    builtin: str | None = "linear"
    csv: str | None = None
    target: int | str = -1
    task: str = "regression"
    seed: int | None = None

    @property
    def label(self) -> str:
        return self.builtin if self.builtin else Path(self.csv).stem


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "exact"
    shots: int = 1024
    single_qubit_error: float = LAGOS_SINGLE_QUBIT_ERROR
    two_qubit_error: float = LAGOS_TWO_QUBIT_ERROR
    trajectories: int = 16

    def build(self, seed: int) -> Backend:
        if self.kind == "exact":
            return Backend.exact()
        if self.kind == "shots":
            return Backend.with_shots(self.shots, seed)
        if self.kind == "noisy":
            noise = NoiseModel(self.single_qubit_error, self.two_qubit_error, LAGOS_TOPOLOGY)
            return Backend.noisy(noise, self.trajectories, seed)
        raise ConfigurationError(f"unknown backend kind {self.kind!r}")

    @classmethod
    def parse_flag(cls, text: str, base: "BackendSpec | None" = None) -> "BackendSpec":
        """``exact``, ``shots:<n>``, ``noisy`` or ``noisy:<p1>,<p2>``."""
        base = base or cls()
        kind, _, arg = text.partition(":")
        if kind == "exact":
            return cls("exact", base.shots, base.single_qubit_error, base.two_qubit_error, base.trajectories)
        if kind == "shots":
            return cls("shots", int(arg) if arg else base.shots, base.single_qubit_error,
                       base.two_qubit_error, base.trajectories)
        if kind == "noisy":
            p1, p2 = base.single_qubit_error, base.two_qubit_error
            if arg:
                try:
                    p1, p2 = (float(v) for v in arg.split(","))
                except ValueError:
                    raise ConfigurationError(f"bad noisy backend flag {text!r}") from None
            return cls("noisy", base.shots, p1, p2, base.trajectories)
        raise ConfigurationError(f"bad backend flag {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dataset: DatasetSpec
    models: tuple[ModelSpec, ...]
    layers: tuple[int, ...]
    repeats: int = 10
    seed: int = 0
    backend: BackendSpec = BackendSpec()
    train: TrainConfig = TrainConfig()
    n_estimators: int = 10
    rounding: str = "floor"
    kind: str = "sweep"
    output: str | None = None

    def __post_init__(self):
        if not self.models:
            raise ConfigurationError("model list is empty")
        if not self.layers or any(l < 1 for l in self.layers):
            raise ConfigurationError("layer list must be nonempty and positive")
        if self.repeats < 1:
            raise ConfigurationError("repeats must be >= 1")
        if self.kind not in ("sweep", "noise_comparison"):
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}")

    @property
    def dataset_seed(self) -> int:
        return self.seed if self.dataset.seed is None else self.dataset.seed

    def output_dir(self, override: str | None = None) -> Path:
        if override:
            return Path(override)
        if self.output:
            return Path(self.output)
        return Path(os.environ.get(OUTPUT_ENV, "results")) / self.name

    def with_overrides(self, seed: int | None = None, backend: str | None = None) -> "ExperimentConfig":
        changes = dict(self.__dict__)
        if seed is not None:
            changes["seed"] = seed
        if backend is not None:
            changes["backend"] = BackendSpec.parse_flag(backend, self.backend)
        return ExperimentConfig(**changes)


def parse_layers(value) -> tuple[int, ...]:
    if isinstance(value, int):
        return (value,)
    if isinstance(value, str):
        m = re.fullmatch(r"\s*(\d+)\s*-\s*(\d+)\s*", value)
        if not m:
            raise ConfigurationError(f"bad layer range {value!r}")
        return tuple(range(int(m[1]), int(m[2]) + 1))
    return tuple(int(v) for v in value)


def _section(raw: dict, key: str) -> dict:
    sec = raw.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigurationError(f"section {key!r} must be a mapping")
    return sec


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a mapping")
    exp = _section(raw, "experiment")
    ds = _section(raw, "dataset")
    if "builtin" not in ds and "csv" not in ds:
        ds = {"builtin": "linear", **ds}
    dataset = DatasetSpec(
        builtin=ds.get("builtin"), csv=ds.get("csv"), target=ds.get("target", -1),
        task=ds.get("task", "regression"), seed=ds.get("seed"),
    )
    if dataset.builtin is None and dataset.csv is None:
        raise ConfigurationError("dataset needs 'builtin' or 'csv'")
    be = _section(raw, "backend")
    backend = BackendSpec(**{k: be[k] for k in BackendSpec.__dataclass_fields__ if k in be})
    tr_raw = _section(raw, "train")
    tr = TrainConfig(**{k: tr_raw[k] for k in TrainConfig.__dataclass_fields__ if k in tr_raw})
    ens = _section(raw, "ensemble")
    models = tuple(ModelSpec.parse(m) for m in raw.get("models", DEFAULT_MODELS))
    return ExperimentConfig(
        name=exp.get("name", "experiment"),
        kind=exp.get("kind", "sweep"),
        dataset=dataset,
        models=models,
        layers=parse_layers(raw.get("layers", [1])),
        repeats=int(raw.get("repeats", 10)),
        seed=int(raw.get("seed", 0)),
        backend=backend,
        train=tr,
        n_estimators=int(ens.get("n_estimators", 10)),
        rounding=ens.get("rounding", "floor"),
        output=raw.get("output"),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from None
    return config_from_dict(raw)


def run_seed(root_seed: int, model_id: str, layers: int, repeat: int) -> int:
    """Stable 63-bit seed: first 8 bytes of sha256("root|model|layers|repeat")."""
    digest = hashlib.sha256(f"{root_seed}|{model_id}|{layers}|{repeat}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)
