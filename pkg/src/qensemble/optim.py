"""Losses, ADAM and the full-batch training loop for a single QNN."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import qnn
from .errors import ConfigurationError, ContractViolation, UnsupportedBackendError
from .qnn import EXACT, Backend, QnnModel

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
GRADIENT_METHODS = ("auto", "adjoint", "parameter_shift")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 150
    seed: int = 0
    gradient_method: str = "auto"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.gradient_method not in GRADIENT_METHODS:
            raise ConfigurationError(f"gradient_method must be one of {GRADIENT_METHODS}")

    def replace(self, **changes) -> "TrainConfig":
        values = {**self.__dict__, **changes}
        return TrainConfig(**values)


@dataclass
class FitResult:
    model: QnnModel
    train_loss_curve: np.ndarray
    wall_time: float

    @property
    def final_params(self) -> np.ndarray:
        return self.model.params


def mse_loss(predictions, targets) -> float:
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape or predictions.size == 0:
        raise ContractViolation("predictions and targets must be equal-length and nonempty")
    return float(np.mean((predictions - targets) ** 2))


def cce_loss(class_probs, labels) -> float:
    """Mean negative log-likelihood of the true labels."""
    probs = np.atleast_2d(np.asarray(class_probs, dtype=np.float64))
    labels = np.asarray(labels)
    if probs.shape[0] != labels.shape[0] or labels.size == 0:
        raise ContractViolation("one probability vector per label required")
    k = probs.shape[1]
    if labels.dtype.kind not in "iu" or np.any(labels < 0) or np.any(labels >= k):
        raise ContractViolation(f"labels must be integers in [0, {k})")
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
        raise ContractViolation("probability vectors must sum to 1")
    picked = np.maximum(probs[np.arange(labels.size), labels], PROB_FLOOR)
    return float(-np.mean(np.log(picked)))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(params, grads, state: AdamState, config: TrainConfig = TrainConfig(),
              wrap: bool = True) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected ADAM update. Angles are wrapped into [0, 2 pi) unless ``wrap`` is off."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ContractViolation("params, grads and moments must have equal shapes")
    t = state.t + 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    m = b1 * state.m + (1 - b1) * grads
    v = b2 * state.v + (1 - b2) * grads * grads
    m_hat = m / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    new = params - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    if wrap:
        new = np.mod(new, qnn.TWO_PI)
    return new, AdamState(m, v, t)


def _normalized_weights(n: int, sample_weight) -> np.ndarray:
    if sample_weight is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(sample_weight, dtype=np.float64)
    if w.shape != (n,) or np.any(w < 0) or not w.sum() > 0:
        raise ContractViolation("sample_weight must be nonnegative with positive sum")
    return w / w.sum()


def _loss_and_dvalues(values: np.ndarray, targets: np.ndarray, weights: np.ndarray,
                      classifier: bool) -> tuple[float, np.ndarray]:
    """Weighted loss and its derivative w.r.t. the raw head expectations."""
    if classifier:
        probs = qnn.softmax(values)
        idx = np.arange(targets.size)
        loss = float(-np.sum(weights * np.log(np.maximum(probs[idx, targets], PROB_FLOOR))))
        d = probs.copy()
        d[idx, targets] -= 1.0
        return loss, d * weights[:, None]
    resid = values[:, 0] - targets
    loss = float(np.sum(weights * resid * resid))
    return loss, (2.0 * weights * resid)[:, None]


def loss_and_gradient(model: QnnModel, X: np.ndarray, y: np.ndarray, weights: np.ndarray,
                      method: str, backend: Backend = EXACT,
                      rng: np.random.Generator | None = None) -> tuple[float, np.ndarray]:
    classifier = model.is_classifier
    if method == "adjoint":
        holder = {}

        def weight_fn(values):
            holder["loss"], d = _loss_and_dvalues(values, y, weights, classifier)
            return d

        _, vjp = qnn.value_and_vjp(X, model.params, model.config, weight_fn=weight_fn)
        # fixed-order reduction over samples
        return holder["loss"], vjp.sum(axis=0)
    values = qnn.forward(X, model.params, model.config, backend, rng)
    loss, d = _loss_and_dvalues(values, y, weights, classifier)
    jac = qnn.grad_parameter_shift(X, model.params, model.config, backend, rng)
    return loss, np.einsum("bh,bhp->p", d, jac)


def train(model: QnnModel, train_set, config: TrainConfig = TrainConfig(),
          sample_weight=None, backend: Backend = EXACT) -> FitResult:
    """Full-batch ADAM on the empirical risk (MSE or CCE).

    ``train_set`` is anything with ``features`` and ``targets`` arrays. The
    returned curve holds the loss evaluated at the start of every epoch, i.e.
    before that epoch's update.
    """
    X = np.asarray(train_set.features, dtype=np.float64)
    y = np.asarray(train_set.targets)
    if X.ndim != 2 or X.shape[1] != model.config.n_qubits:
        raise ContractViolation(
            f"feature dimension {X.shape[-1]} does not match {model.config.n_qubits} qubits"
        )
    if model.is_classifier:
        y = y.astype(np.int64)
        if np.any(y < 0) or np.any(y >= model.n_classes):
            raise ContractViolation("class labels out of range")
    else:
        y = y.astype(np.float64)
        if np.any(np.abs(y) > 1.0 + 1e-12):
            raise ContractViolation("regression targets must be scaled into [-1, 1]")

    method = config.gradient_method
    if method == "auto":
        method = "adjoint" if backend.is_exact else "parameter_shift"
    if method == "adjoint" and not backend.is_exact:
        raise UnsupportedBackendError("adjoint gradients need the exact backend")

    weights = _normalized_weights(len(y), sample_weight)
    rng = None if backend.is_exact else np.random.default_rng([config.seed, backend.seed])
    state = AdamState.zeros(model.config.n_params)
    params = model.params.copy()
    curve = np.empty(config.epochs)
    start = time.perf_counter()
    for epoch in range(config.epochs):
        current = QnnModel(model.config, params, model.n_classes)
        loss, grad = loss_and_gradient(current, X, y, weights, method, backend, rng)
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise FloatingPointError(f"non-finite loss or gradient at epoch {epoch}")
        curve[epoch] = loss
        params, state = adam_step(params, grad, state, config)
    wall = time.perf_counter() - start
    log.debug("trained %s qubits x %s layers in %.2fs, final loss %.4g",
              model.config.n_qubits, model.config.layers, wall, curve[-1])
    return FitResult(QnnModel(model.config, params, model.n_classes), curve, wall)
