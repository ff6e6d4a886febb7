"""Grid execution, crash-safe record files, summaries and the noise comparison.

Files written to the output directory:

``records.csv``
    One row per (model, layers, repeat) with the columns of
    :data:`RECORD_COLUMNS` in that order. Rows are appended and flushed as
    runs complete, so the file is valid after a crash; rerunning the same
    config skips cells that already have an ``ok`` row.
``summary.csv`` / ``summary.json``
    Mean and population std (ddof=0) of the train and test metric per
    (dataset, model, layers), computed from ``ok`` rows sorted by repeat.
    Wall time is excluded, so reruns with the same root seed produce
    byte-identical summaries.
``curves_<dataset>.csv``, ``resources_<dataset>.csv`` and optional
``curves_<dataset>.svg`` (only when matplotlib is importable).

Floats are written with ``repr`` (shortest round-trip form).
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from .. import data as data_mod
from .. import ensemble, optim
from ..errors import ConfigurationError, ContractViolation
from ..qnn import QnnConfig, QnnModel, resource_report
from .config import DEFAULT_MODELS, DatasetSpec, ExperimentConfig, ModelSpec, run_seed

log = logging.getLogger(__name__)

NOISE_MODELS = ("FM", "Bag_0.8_0.2")


@dataclass
class RunRecord:
    model: str
    dataset: str
    layers: int
    repeat: int
    seed: int
    status: str
    metric: str
    train_metric: float
    test_metric: float
    wall_time: float
    n_members: int
    member_qubits: int
    member_params: int
    member_cnots: int
    total_params: int
    total_cnots: int
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def cell(self) -> tuple[str, int, int]:
        return (self.model, self.layers, self.repeat)


RECORD_COLUMNS = tuple(f.name for f in fields(RunRecord))
_INT_COLUMNS = {"layers", "repeat", "seed", "n_members", "member_qubits", "member_params",
                "member_cnots", "total_params", "total_cnots"}
_FLOAT_COLUMNS = {"train_metric", "test_metric", "wall_time"}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_records(path: Path, records, append: bool = False) -> None:
    path = Path(path)
    new_file = not (append and path.exists())
    with path.open("a" if append else "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if new_file:
            writer.writerow(RECORD_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, c)) for c in RECORD_COLUMNS])
        fh.flush()
        os.fsync(fh.fileno())


def read_records(path) -> list[RunRecord]:
    path = Path(path)
    if path.is_dir():
        path = path / "records.csv"
    if not path.is_file():
        raise ContractViolation(f"no records file at {path}")
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            values = {}
            for c in RECORD_COLUMNS:
                v = row.get(c, "")
                if c in _INT_COLUMNS:
                    v = int(v)
                elif c in _FLOAT_COLUMNS:
                    v = float(v)
                values[c] = v
            out.append(RunRecord(**values))
    return out


# ---------------------------------------------------------------------------
# single runs

@lru_cache(maxsize=8)
def _prepared(spec: DatasetSpec, seed: int) -> data_mod.PreparedData:
    if spec.csv:
        raw = data_mod.load_csv(spec.csv, data_mod.CsvSchema(target=spec.target, task=spec.task))
    else:
        raw = data_mod.load_builtin(spec.builtin, seed)
    return data_mod.prepare(raw, seed)


def resolve_dataset(config: ExperimentConfig) -> data_mod.PreparedData:
    return _prepared(config.dataset, config.dataset_seed)


def _metric(task: str, predictions, targets) -> float:
    if task == data_mod.CLASSIFICATION:
        return float(np.mean(np.asarray(predictions) == np.asarray(targets)))
    return optim.mse_loss(predictions, targets)


def _ensemble_config(spec: ModelSpec, config: ExperimentConfig, seed: int,
                     task: str) -> ensemble.EnsembleConfig:
    if spec.kind == "bagging":
        return ensemble.EnsembleConfig("bagging", config.n_estimators, spec.sample_ratio,
                                       spec.feature_ratio, seed=seed, rounding=config.rounding)
    scheme = "adaboost_samme_r" if task == data_mod.CLASSIFICATION else "adaboost_r2"
    return ensemble.EnsembleConfig(scheme, config.n_estimators, seed=seed, rounding=config.rounding)


def fit_model(spec: ModelSpec, config: ExperimentConfig, train_set, layers: int, seed: int):
    """Train one FM or ensemble; returns an object with ``predict`` and ``resources``."""
    backend = config.backend.build(seed)
    tr = config.train.replace(seed=seed)
    if spec.kind == "fm":
        model = QnnModel.create(train_set.n_features, layers, train_set.n_classes, seed=seed)
        fitted = optim.train(model, train_set, tr, backend=backend).model
        return _SingleModel(fitted), backend
    ens = _ensemble_config(spec, config, seed, train_set.task)
    return ensemble.fit(train_set, ens, tr, layers, backend), backend


@dataclass
class _SingleModel:
    model: QnnModel

    def predict(self, X, backend, rng=None):
        out = self.model.predict(X, backend, rng)
        return np.argmax(out, axis=1) if self.model.is_classifier else out

    @property
    def members(self):
        return [self]

    def resources(self):
        return self.model.resources()

    def member_reports(self):
        return [self.model.resources()]


def run_cell(config: ExperimentConfig, model_id: str, layers: int, repeat: int,
             seed: int | None = None) -> RunRecord:
    """Train and score one grid cell. Failures become ``status='error'`` records."""
    spec = ModelSpec.parse(model_id)
    prepared = resolve_dataset(config)
    train_set, test_set = prepared.train, prepared.test
    task = train_set.task
    metric = "accuracy" if task == data_mod.CLASSIFICATION else "mse"
    seed = run_seed(config.seed, model_id, layers, repeat) if seed is None else seed
    base = dict(model=model_id, dataset=config.dataset.label, layers=layers, repeat=repeat,
                seed=seed, metric=metric)
    start = time.perf_counter()
    try:
        model, backend = fit_model(spec, config, train_set, layers, seed)
        rng = None if backend.is_exact else np.random.default_rng([seed, 3])
        train_m = _metric(task, model.predict(train_set.features, backend, rng), train_set.targets)
        test_m = _metric(task, model.predict(test_set.features, backend, rng), test_set.targets)
        if not (math.isfinite(train_m) and math.isfinite(test_m)):
            raise FloatingPointError("non-finite metric")
        reports = model.member_reports()
        first, total = reports[0], model.resources()
        return RunRecord(**base, status="ok", train_metric=train_m, test_metric=test_m,
                         wall_time=time.perf_counter() - start, n_members=len(reports),
                         member_qubits=first.n_qubits, member_params=first.trainable_params,
                         member_cnots=first.cnot_gates, total_params=total.trainable_params,
                         total_cnots=total.cnot_gates)
    except Exception as exc:  # recorded, the sweep continues
        log.warning("run %s failed: %s", base, exc)
        return RunRecord(**base, status="error", train_metric=float("nan"),
                         test_metric=float("nan"), wall_time=time.perf_counter() - start,
                         n_members=0, member_qubits=0, member_params=0, member_cnots=0,
                         total_params=0, total_cnots=0,
                         error=f"{type(exc).__name__}: {exc}".replace("\n", " "))


def _cell_job(args):
    config, model_id, layers, repeat, seed = args
    return run_cell(config, model_id, layers, repeat, seed)


def grid_cells(config: ExperimentConfig) -> list[tuple[str, int, int]]:
    return [(m.model_id, l, r) for m in config.models for l in config.layers
            for r in range(config.repeats)]


def _execute(config: ExperimentConfig, jobs_list, records_path: Path, jobs: int) -> list[RunRecord]:
    done = []
    if jobs <= 1 or len(jobs_list) <= 1:
        for job in jobs_list:
            rec = _cell_job(job)
            write_records(records_path, [rec], append=True)
            done.append(rec)
        return done
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_cell_job, job) for job in jobs_list]
        for fut in as_completed(futures):
            rec = fut.result()
            write_records(records_path, [rec], append=True)  # single writer
            done.append(rec)
    return done


def _validate_startup(config: ExperimentConfig) -> None:
    try:
        resolve_dataset(config)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot resolve dataset: {exc}") from exc


def _resume(records_path: Path) -> list[RunRecord]:
    if not records_path.exists():
        return []
    kept = [r for r in read_records(records_path) if r.ok]
    write_records(records_path, kept)  # failed cells are retried
    return kept


def run_experiment(config: ExperimentConfig, out_dir=None, jobs: int | None = None) -> list[RunRecord]:
    """Run every grid cell, append records, then write summaries and figure data."""
    if config.kind == "noise_comparison":
        return noise_comparison(config, out_dir, jobs)
    _validate_startup(config)
    out = config.output_dir(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / "records.csv"
    previous = _resume(records_path)
    finished = {r.cell for r in previous}
    todo = [(config, m, l, r, None) for m, l, r in grid_cells(config) if (m, l, r) not in finished]
    log.info("%d cells to run (%d already recorded)", len(todo), len(finished))
    records = previous + _execute(config, todo, records_path, jobs or os.cpu_count() or 1)
    emit_report(records, out)
    return records


# ---------------------------------------------------------------------------
# summaries and report files

def _model_order(model_id: str) -> tuple:
    return (DEFAULT_MODELS.index(model_id), "") if model_id in DEFAULT_MODELS else (len(DEFAULT_MODELS), model_id)


def summarize(records) -> list[dict]:
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        if r.ok:
            groups.setdefault((r.dataset, r.model, r.layers), []).append(r)
    rows = []
    for key in sorted(groups, key=lambda k: (k[0], _model_order(k[1]), k[2])):
        recs = sorted(groups[key], key=lambda r: r.repeat)
        test = np.array([r.test_metric for r in recs])
        train = np.array([r.train_metric for r in recs])
        rows.append({
            "dataset": key[0], "model": key[1], "layers": key[2], "metric": recs[0].metric,
            "n": len(recs),
            "test_mean": float(test.mean()), "test_std": float(test.std()),
            "train_mean": float(train.mean()), "train_std": float(train.std()),
            "member_qubits": recs[0].member_qubits, "member_params": recs[0].member_params,
            "member_cnots": recs[0].member_cnots,
        })
    return rows


SUMMARY_COLUMNS = ("dataset", "model", "layers", "metric", "n", "test_mean", "test_std",
                   "train_mean", "train_std", "member_qubits", "member_params", "member_cnots")


def _write_table(path: Path, columns, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def emit_report(records, out_dir) -> dict[str, Path]:
    """Write summary tables, per-dataset curve/resource files and optional SVGs."""
    records = list(records)
    if not records:
        raise ContractViolation("emit_report needs at least one record")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = summarize(records)
    written = {"summary_csv": out / "summary.csv", "summary_json": out / "summary.json"}
    _write_table(written["summary_csv"], SUMMARY_COLUMNS, rows)
    failed = sum(1 for r in records if not r.ok)
    written["summary_json"].write_text(
        json.dumps({"records": len(records), "failed": failed, "groups": rows}, indent=2) + "\n",
        encoding="utf-8")
    for dataset in sorted({r["dataset"] for r in rows}):
        sub = [r for r in rows if r["dataset"] == dataset]
        curves = out / f"curves_{dataset}.csv"
        _write_table(curves, ("model", "layers", "n", "test_mean", "test_std"), sub)
        written[f"curves_{dataset}"] = curves
        res_rows = [{**r, "member_params": r["member_params"]} for r in sub]
        res = out / f"resources_{dataset}.csv"
        _write_table(res, ("model", "layers", "member_qubits", "member_params", "member_cnots"), res_rows)
        written[f"resources_{dataset}"] = res
        svg = _plot_curves(sub, out / f"curves_{dataset}.svg")
        if svg:
            written[f"svg_{dataset}"] = svg
    return written


def _plot_curves(rows: list[dict], path: Path) -> Path | None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    for model in sorted({r["model"] for r in rows}, key=_model_order):
        pts = [r for r in rows if r["model"] == model]
        ax.errorbar([p["layers"] for p in pts], [p["test_mean"] for p in pts],
                    yerr=[p["test_std"] for p in pts], label=model, marker="o", capsize=2)
    ax.set_xlabel("layers")
    ax.set_ylabel(f"test {rows[0]['metric']}")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# static resource table

def resource_rows(n_features: int, models, layers, rounding: str = "floor",
                  n_estimators: int = 10, dataset: str = "") -> list[dict]:
    """Per-member qubits/params/CNOTs for every (model, layers) given the feature count."""
    rows = []
    for spec in models:
        spec = ModelSpec.parse(spec) if isinstance(spec, str) else spec
        q = n_features if spec.kind != "bagging" else ensemble.subset_size(n_features, spec.feature_ratio, rounding)
        members = 1 if spec.kind == "fm" else n_estimators
        for n_layers in layers:
            rep = resource_report(QnnConfig(q, n_layers))
            rows.append({"dataset": dataset, "model": spec.model_id, "layers": n_layers,
                         "member_qubits": rep.n_qubits, "member_params": rep.trainable_params,
                         "member_cnots": rep.cnot_gates, "members": members,
                         "total_params": members * rep.trainable_params})
    return rows


def resource_table(config: ExperimentConfig) -> list[dict]:
    """Resource rows for a config, without training. AdaBoost counts its maximum member number."""
    d = resolve_dataset(config).train.n_features
    return resource_rows(d, config.models, config.layers, config.rounding, config.n_estimators,
                         config.dataset.label)


RESOURCE_COLUMNS = ("dataset", "model", "layers", "member_qubits", "member_params",
                    "member_cnots", "members", "total_params")


# ---------------------------------------------------------------------------
# noise comparison

@dataclass
class NoiseComparison:
    fm_mse: list[float]
    bag_mse: list[float]

    @property
    def fm_mean(self) -> float:
        return float(np.mean(self.fm_mse))

    @property
    def bag_mean(self) -> float:
        return float(np.mean(self.bag_mse))

    @property
    def fm_var(self) -> float:
        return float(np.var(self.fm_mse, ddof=1)) if len(self.fm_mse) > 1 else 0.0

    @property
    def bag_var(self) -> float:
        return float(np.var(self.bag_mse, ddof=1)) if len(self.bag_mse) > 1 else 0.0

    def as_dict(self) -> dict:
        return {**asdict(self), "fm_mean": self.fm_mean, "bag_mean": self.bag_mean,
                "fm_var": self.fm_var, "bag_var": self.bag_var,
                "mean_ratio": self.bag_mean / self.fm_mean if self.fm_mean else float("nan"),
                "var_ratio": self.bag_var / self.fm_var if self.fm_var else float("nan")}


def noise_comparison(config: ExperimentConfig, out_dir=None, jobs: int | None = None,
                     pairs: int | None = None, layers: int = 1, epochs: int = 10) -> list[RunRecord]:
    """Paired FM vs Bag_0.8_0.2 runs on a noisy backend.

    Pair ``r`` uses one seed for both models: FM's initial angles and the first
    bagging member's initial angles come from the same stream. Test MSE per
    pair plus mean and variance (ddof=1) ratios go to ``noise_summary.json``.
    """
    if config.backend.kind != "noisy":
        raise ConfigurationError("noise_comparison needs a noisy backend")
    _validate_startup(config)
    if resolve_dataset(config).train.is_classification:
        raise ConfigurationError("noise_comparison needs a regression dataset")
    pairs = pairs or config.repeats
    cfg = ExperimentConfig(**{**config.__dict__, "models": tuple(ModelSpec.parse(m) for m in NOISE_MODELS),
                              "layers": (layers,), "repeats": pairs,
                              "train": config.train.replace(epochs=epochs), "kind": "sweep"})
    out = config.output_dir(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records_path = out / "noise_records.csv"
    write_records(records_path, [])
    todo = [(cfg, m, layers, r, run_seed(config.seed, "noise-pair", layers, r))
            for r in range(pairs) for m in NOISE_MODELS]
    records = _execute(cfg, todo, records_path, jobs or os.cpu_count() or 1)
    records.sort(key=lambda rec: (rec.repeat, NOISE_MODELS.index(rec.model)))
    comparison = comparison_from_records(records)
    (out / "noise_summary.json").write_text(json.dumps(comparison.as_dict(), indent=2) + "\n",
                                            encoding="utf-8")
    return records


def comparison_from_records(records) -> NoiseComparison:
    by = {(r.model, r.repeat): r for r in records if r.ok}
    reps = sorted({r.repeat for r in records})
    paired = [r for r in reps if ("FM", r) in by and ("Bag_0.8_0.2", r) in by]
    return NoiseComparison([by[("FM", r)].test_metric for r in paired],
                           [by[("Bag_0.8_0.2", r)].test_metric for r in paired])
