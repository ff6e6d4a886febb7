"""Ensembles of QNN base predictors: bagging / random subspace and AdaBoost.

Member seeding: an ensemble with seed ``s`` initializes member ``i`` with seed
``s + i``; data selection (bootstrap rows, feature subsets) draws from a
separate stream seeded with ``[s, 1]``. A one-member bagging ensemble with
both ratios at 1.0 therefore reproduces the single model trained with seed
``s`` exactly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol, Sequence

import numpy as np

from . import optim, qnn
from .data import Dataset
from .errors import ConfigurationError, ContractViolation, TrainingError
from .optim import TrainConfig
from .qnn import EXACT, Backend, QnnModel, ResourceReport

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
BETA_MIN = 1e-10


class CombinationRule(str, Enum):
    AVERAGE = "average"
    WEIGHTED_AVERAGE = "weighted_average"
    MAJORITY_VOTE = "majority_vote"
    WEIGHTED_MAJORITY_VOTE = "weighted_majority_vote"
    BORDA = "borda"
    MIN = "min"
    MAX = "max"
    WEIGHTED_MEDIAN = "weighted_median"


REGRESSION_RULES = {CombinationRule.AVERAGE, CombinationRule.WEIGHTED_AVERAGE, CombinationRule.MIN,
                    CombinationRule.MAX, CombinationRule.WEIGHTED_MEDIAN}
CLASSIFICATION_RULES = {CombinationRule.AVERAGE, CombinationRule.WEIGHTED_AVERAGE,
                        CombinationRule.MAJORITY_VOTE, CombinationRule.WEIGHTED_MAJORITY_VOTE,
                        CombinationRule.BORDA}

SCHEMES = ("bagging", "adaboost_r2", "adaboost_samme_r")
ROUNDING_MODES = ("half_up", "floor")


@dataclass(frozen=True)
class EnsembleConfig:
    scheme: str = "bagging"
    n_estimators: int = 10
    sample_ratio: float = 1.0
    feature_ratio: float = 1.0
    rule: CombinationRule | None = None
    seed: int = 0
    rounding: str = "half_up"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}")
        if self.n_estimators < 1:
            raise ConfigurationError("n_estimators must be >= 1")
        for r in (self.sample_ratio, self.feature_ratio):
            if not 0 < r <= 1:
                raise ConfigurationError(f"ratio {r} outside (0, 1]")
        if self.rounding not in ROUNDING_MODES:
            raise ConfigurationError(f"rounding must be one of {ROUNDING_MODES}")
        if self.rule is not None:
            object.__setattr__(self, "rule", CombinationRule(self.rule))

    @property
    def effective_rule(self) -> CombinationRule:
        if self.rule is not None:
            return self.rule
        if self.scheme == "bagging":
            return CombinationRule.AVERAGE
        return CombinationRule.WEIGHTED_AVERAGE


# ---------------------------------------------------------------------------
# data selection

def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def subset_size(total: int, ratio: float, rounding: str = "half_up") -> int:
    scaled = ratio * total
    k = int(math.floor(scaled + 1e-9)) if rounding == "floor" else round_half_up(scaled)
    return min(total, max(1, k))


def bootstrap_indices(n_train: int, r_n: float, rng: np.random.Generator) -> np.ndarray:
    """``round(r_n * n_train)`` row indices drawn uniformly with replacement."""
    if n_train < 1:
        raise ContractViolation("n_train must be >= 1")
    size = max(1, round_half_up(r_n * n_train))
    return rng.integers(0, n_train, size=size)


def subspace_indices(d: int, r_f: float, rng: np.random.Generator,
                     rounding: str = "half_up") -> np.ndarray:
    """Sorted feature indices drawn without replacement."""
    if d < 1:
        raise ContractViolation("d must be >= 1")
    k = subset_size(d, r_f, rounding)
    return np.sort(rng.choice(d, size=k, replace=False))


# ---------------------------------------------------------------------------
# base learners

class Predictor(Protocol):
    def predict(self, X, backend: Backend = EXACT, rng=None) -> np.ndarray: ...


Learner = Callable[..., Predictor]


@dataclass
class QnnLearner:
    """Trains one QNN per call: ``learner(train_set, seed, sample_weight=None)``."""

    layers: int
    train_config: TrainConfig = TrainConfig()
    backend: Backend = EXACT

    def __call__(self, train_set: Dataset, seed: int, sample_weight=None) -> QnnModel:
        model = QnnModel.create(train_set.n_features, self.layers, train_set.n_classes, seed=seed)
        tr = self.train_config.replace(seed=seed)
        return optim.train(model, train_set, tr, sample_weight, self.backend).model


@dataclass
class Member:
    predictor: Predictor
    feature_indices: np.ndarray
    weight: float = 1.0

    def predict(self, X, backend: Backend = EXACT, rng=None) -> np.ndarray:
        return self.predictor.predict(np.asarray(X)[:, self.feature_indices], backend=backend, rng=rng)


@dataclass
class RoundTrace:
    """Diagnostics of one boosting round."""

    round: int
    sample_weights_before: np.ndarray
    sample_weights_after: np.ndarray
    average_loss: float | None = None
    beta: float | None = None
    member_weight: float | None = None
    accepted: bool = True


@dataclass
class EnsembleModel:
    members: list[Member]
    rule: CombinationRule
    task: str = "regression"
    scheme: str = "bagging"
    n_classes: int | None = None
    history: list[RoundTrace] = field(default_factory=list)

    @property
    def weights(self) -> np.ndarray:
        return np.array([m.weight for m in self.members])

    def member_outputs(self, X, backend: Backend = EXACT, rng=None) -> np.ndarray:
        """Stacked member outputs: ``(m, batch)`` or ``(m, batch, k)`` probabilities."""
        if rng is None and not backend.is_exact:
            rng = np.random.default_rng(backend.seed)
        return np.stack([m.predict(X, backend, rng) for m in self.members])

    def decision_function(self, X, backend: Backend = EXACT, rng=None) -> np.ndarray:
        """Summed SAMME.R class scores (boosted classifiers only)."""
        if self.scheme != "adaboost_samme_r":
            raise ConfigurationError("decision_function is defined for SAMME.R ensembles")
        probs = self.member_outputs(X, backend, rng)
        return samme_r_scores(probs).sum(axis=0)

    def predict(self, X, backend: Backend = EXACT, rng=None) -> np.ndarray:
        """Regression values or class indices."""
        if self.scheme == "adaboost_samme_r":
            return np.argmax(self.decision_function(X, backend, rng), axis=1)
        outputs = self.member_outputs(X, backend, rng)
        return combine(outputs, self.rule, self.weights, self.task)

    def predict_proba(self, X, backend: Backend = EXACT, rng=None) -> np.ndarray:
        if self.task != "classification":
            raise ConfigurationError("predict_proba needs a classification ensemble")
        if self.scheme == "adaboost_samme_r":
            k = self.n_classes
            return qnn.softmax(self.decision_function(X, backend, rng) / (k - 1))
        outputs = self.member_outputs(X, backend, rng)
        w = self.weights if self.rule is CombinationRule.WEIGHTED_AVERAGE else np.ones(len(self.members))
        return np.tensordot(w / w.sum(), outputs, axes=1)

    def member_reports(self) -> list[ResourceReport]:
        return [m.predictor.resources() for m in self.members]

    def resources(self) -> ResourceReport:
        reports = self.member_reports()
        total = reports[0]
        for r in reports[1:]:
            total = total + r
        return total


# ---------------------------------------------------------------------------
# combination rules

def _check_rule(rule: CombinationRule, task: str) -> None:
    allowed = CLASSIFICATION_RULES if task == "classification" else REGRESSION_RULES
    if rule not in allowed:
        raise ConfigurationError(f"rule {rule.value!r} is not valid for {task}")


def _rank_points(probs: np.ndarray) -> np.ndarray:
    """Borda points: the most likely class of a member gets k-1, the least 0."""
    k = probs.shape[-1]
    # stable descending order; equal likelihoods rank the lower index first
    order = np.argsort(-probs, axis=-1, kind="stable")
    position = np.argsort(order, axis=-1, kind="stable")
    return (k - 1 - position).astype(np.float64)


def weighted_median(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per column of ``values`` (m, batch): smallest value whose cumulative weight reaches half."""
    order = np.argsort(values, axis=0, kind="stable")
    sorted_w = weights[order]
    cum = np.cumsum(sorted_w, axis=0)
    pick = np.argmax(cum >= 0.5 * cum[-1], axis=0)
    rows = order[pick, np.arange(values.shape[1])]
    return values[rows, np.arange(values.shape[1])]


def combine(predictions, rule, weights=None, task: str = "regression",
            n_classes: int | None = None) -> np.ndarray:
    """Merge member outputs.

    Regression: ``predictions`` has shape (m, batch) (or (m,) for one sample).
    Classification: per-member class probabilities (m, batch, k) or hard
    labels (m, batch) of integer dtype; labels only support the voting rules.
    Ties resolve to the lowest class index.
    """
    rule = CombinationRule(rule)
    _check_rule(rule, task)
    preds = np.asarray(predictions)
    if preds.shape[0] < 1:
        raise ContractViolation("need at least one member")
    single = False
    m = preds.shape[0]
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (m,):
        raise ContractViolation("one weight per member required")
    if rule in (CombinationRule.WEIGHTED_AVERAGE, CombinationRule.WEIGHTED_MAJORITY_VOTE,
                CombinationRule.WEIGHTED_MEDIAN) and np.any(w <= 0):
        raise ConfigurationError("weighted rules need positive weights")

    if task != "classification":
        values = preds.astype(np.float64)
        if values.ndim == 1:
            values, single = values[:, None], True
        if rule is CombinationRule.AVERAGE:
            out = values.mean(axis=0)
        elif rule is CombinationRule.WEIGHTED_AVERAGE:
            out = np.tensordot(w, values, axes=1) / w.sum()
        elif rule is CombinationRule.MIN:
            out = values.min(axis=0)
        elif rule is CombinationRule.MAX:
            out = values.max(axis=0)
        else:
            out = weighted_median(values, w)
        return out[0] if single else out

    labels_given = preds.dtype.kind in "iu"
    if labels_given:
        if rule not in (CombinationRule.MAJORITY_VOTE, CombinationRule.WEIGHTED_MAJORITY_VOTE):
            raise ConfigurationError(f"rule {rule.value!r} needs class probabilities, not labels")
        if preds.ndim == 1:
            preds, single = preds[:, None], True
        k = n_classes if n_classes is not None else int(preds.max()) + 1
        votes = np.eye(k)[preds]
    else:
        if preds.ndim == 2:
            preds, single = preds[:, None, :], True
        k = preds.shape[-1]
        votes = np.eye(k)[np.argmax(preds, axis=-1)]

    if rule is CombinationRule.MAJORITY_VOTE:
        scores = votes.sum(axis=0)
    elif rule is CombinationRule.WEIGHTED_MAJORITY_VOTE:
        scores = np.tensordot(w, votes, axes=1)
    elif rule is CombinationRule.BORDA:
        scores = _rank_points(preds).sum(axis=0)
    elif rule is CombinationRule.AVERAGE:
        scores = preds.mean(axis=0)
    else:
        scores = np.tensordot(w, preds, axes=1) / w.sum()
    out = np.argmax(scores, axis=-1)
    return out[0] if single else out


def jury_probability(m: int, p: float, threshold: int | None = None) -> float:
    """P(at least ``threshold`` of ``m`` independent voters are right).

    The default threshold is ``ceil(m/2) + 1``; pass ``m // 2 + 1`` for the
    simple-majority variant. Returns 0 when the range is empty.
    """
    if m < 1 or not 0.0 <= p <= 1.0:
        raise ConfigurationError("need m >= 1 and p in [0, 1]")
    lo = math.ceil(m / 2) + 1 if threshold is None else threshold
    return float(sum(math.comb(m, k) * p ** k * (1 - p) ** (m - k) for k in range(max(lo, 0), m + 1)))


# ---------------------------------------------------------------------------
# trainers

def _data_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1])


def _default_learner(layers: int, tr: TrainConfig, backend: Backend) -> QnnLearner:
    return QnnLearner(layers, tr, backend)


def fit_bagging(train_set: Dataset, ens: EnsembleConfig, tr: TrainConfig = TrainConfig(),
                layers: int = 1, backend: Backend = EXACT, learner: Learner | None = None) -> EnsembleModel:
    """Bootstrap rows (ratio < 1) and random feature subspaces, equal weights.

    With ``sample_ratio == 1.0`` every member sees the full training set.
    """
    learner = learner or _default_learner(layers, tr, backend)
    rng = _data_rng(ens.seed)
    rule = ens.effective_rule
    _check_rule(rule, train_set.task)
    n, d = len(train_set), train_set.n_features
    members = []
    for i in range(ens.n_estimators):
        rows = None if ens.sample_ratio >= 1.0 else bootstrap_indices(n, ens.sample_ratio, rng)
        cols = subspace_indices(d, ens.feature_ratio, rng, ens.rounding)
        if train_set.is_classification and cols.size < train_set.n_classes:
            raise ConfigurationError(
                f"{cols.size} features cannot host a {train_set.n_classes}-class head"
            )
        try:
            predictor = learner(train_set.subset(rows=rows, columns=cols), seed=ens.seed + i)
        except Exception as exc:
            raise TrainingError(i, exc) from exc
        members.append(Member(predictor, cols, 1.0))
    return EnsembleModel(members, rule, train_set.task, "bagging", train_set.n_classes)


def fit_adaboost_r2(train_set: Dataset, ens: EnsembleConfig, tr: TrainConfig = TrainConfig(),
                    layers: int = 1, backend: Backend = EXACT, learner: Learner | None = None,
                    predict_backend: Backend | None = None) -> EnsembleModel:
    """AdaBoost.R2 with the linear loss and weighted-bootstrap resampling.

    Each round draws a full-size bootstrap from the current sample weights,
    fits a member on all features and updates ``w_i <- w_i * beta**(1 - L_i)``.
    Rounds with average loss >= 0.5 end training without adding the member
    (the very first member is kept with unit weight so the ensemble is never
    empty). A perfect fit ends training with weight ``log(1 / 1e-10)``.
    """
    if train_set.is_classification:
        raise ConfigurationError("AdaBoost.R2 is a regression scheme")
    learner = learner or _default_learner(layers, tr, backend)
    predict_backend = predict_backend or backend
    rng = _data_rng(ens.seed)
    rule = ens.rule or CombinationRule.WEIGHTED_AVERAGE
    _check_rule(rule, train_set.task)
    n, X, y = len(train_set), train_set.features, train_set.targets
    all_cols = np.arange(train_set.n_features)
    w = np.full(n, 1.0 / n)
    members: list[Member] = []
    history: list[RoundTrace] = []
    pred_rng = np.random.default_rng([ens.seed, 2])
    for r in range(ens.n_estimators):
        rows = rng.choice(n, size=n, replace=True, p=w)
        try:
            predictor = learner(train_set.subset(rows=rows), seed=ens.seed + r)
        except Exception as exc:
            raise TrainingError(r, exc) from exc
        err = np.abs(np.asarray(predictor.predict(X, backend=predict_backend, rng=pred_rng)) - y)
        D = err.max()
        if D <= 0:
            weight = math.log(1.0 / BETA_MIN)
            members.append(Member(predictor, all_cols, weight))
            history.append(RoundTrace(r, w, w.copy(), 0.0, BETA_MIN, weight))
            break
        loss = err / D
        avg = float(np.dot(w, loss))
        if avg >= 0.5:
            keep = not members
            if keep:
                members.append(Member(predictor, all_cols, 1.0))
            history.append(RoundTrace(r, w, w.copy(), avg, None, 1.0 if keep else None, keep))
            break
        beta = avg / (1.0 - avg)
        weight = math.log(1.0 / beta)
        new_w = w * np.power(beta, 1.0 - loss)
        new_w /= new_w.sum()
        members.append(Member(predictor, all_cols, weight))
        history.append(RoundTrace(r, w, new_w, avg, beta, weight))
        w = new_w
    return EnsembleModel(members, rule, train_set.task, "adaboost_r2", None, history)


def samme_r_scores(probs: np.ndarray) -> np.ndarray:
    """Per-member class scores (k-1) * (log p_c - mean_c' log p_c')."""
    k = probs.shape[-1]
    logp = np.log(np.clip(probs, PROB_FLOOR, 1.0))
    return (k - 1) * (logp - logp.mean(axis=-1, keepdims=True))


def fit_adaboost_samme_r(train_set: Dataset, ens: EnsembleConfig, tr: TrainConfig = TrainConfig(),
                         layers: int = 1, backend: Backend = EXACT, learner: Learner | None = None,
                         predict_backend: Backend | None = None) -> EnsembleModel:
    """SAMME.R: members train on the weighted loss; weights follow the coded-label update."""
    if not train_set.is_classification:
        raise ConfigurationError("SAMME.R is a classification scheme")
    learner = learner or _default_learner(layers, tr, backend)
    predict_backend = predict_backend or backend
    k = train_set.n_classes
    n, X, y = len(train_set), train_set.features, train_set.targets
    all_cols = np.arange(train_set.n_features)
    coded = np.full((n, k), -1.0 / (k - 1))
    coded[np.arange(n), y] = 1.0
    w = np.full(n, 1.0 / n)
    members: list[Member] = []
    history: list[RoundTrace] = []
    pred_rng = np.random.default_rng([ens.seed, 2])
    for r in range(ens.n_estimators):
        try:
            predictor = learner(train_set, seed=ens.seed + r, sample_weight=w)
        except Exception as exc:
            raise TrainingError(r, exc) from exc
        probs = np.asarray(predictor.predict(X, backend=predict_backend, rng=pred_rng))
        logp = np.log(np.clip(probs, PROB_FLOOR, 1.0))
        new_w = w * np.exp(-((k - 1) / k) * np.sum(coded * logp, axis=1))
        new_w /= new_w.sum()
        members.append(Member(predictor, all_cols, 1.0))
        history.append(RoundTrace(r, w, new_w))
        w = new_w
    return EnsembleModel(members, CombinationRule.AVERAGE, train_set.task, "adaboost_samme_r", k, history)


def fit(train_set: Dataset, ens: EnsembleConfig, tr: TrainConfig = TrainConfig(), layers: int = 1,
        backend: Backend = EXACT, learner: Learner | None = None) -> EnsembleModel:
    if ens.scheme == "bagging":
        return fit_bagging(train_set, ens, tr, layers, backend, learner)
    if ens.scheme == "adaboost_r2":
        return fit_adaboost_r2(train_set, ens, tr, layers, backend, learner)
    return fit_adaboost_samme_r(train_set, ens, tr, layers, backend, learner)
