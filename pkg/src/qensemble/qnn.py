"""Layered quantum neural network: RY feature map, RX/CNOT/RZ ansatz, <Z> head.

Parameter layout (layer ``k`` zero-based, qubit ``i`` zero-based, ``n`` qubits)::

    slot 3kn + i        first RX column
    slot 3kn + n + i    RZ column (between the two CNOT chains)
    slot 3kn + 2n + i   last RX column

Gate order inside a layer: RX column, CNOT chain CX(0,1) ... CX(n-2,n-1),
RZ column, CNOT chain, RX column. Layers follow the feature map in
increasing ``k``.

Regression models read ``<Z>`` on qubit 0. A k-class model reads ``<Z>`` on
qubits ``0..k-1`` and turns them into class probabilities with a softmax.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import simcore
from .compiled import CompiledProgram
from .errors import ConfigurationError, ContractViolation, UnsupportedBackendError
from .simcore import Gate, GateKind, NoiseModel

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class QnnConfig:
    n_qubits: int
    layers: int
    head_qubits: tuple[int, ...] = (0,)

    def __post_init__(self):
        object.__setattr__(self, "head_qubits", tuple(int(q) for q in self.head_qubits))
        if not 1 <= self.n_qubits <= simcore.MAX_QUBITS:
            raise ConfigurationError(f"n_qubits must be in 1..{simcore.MAX_QUBITS}")
        if self.layers < 1:
            raise ConfigurationError("layers must be >= 1")
        if not self.head_qubits:
            raise ConfigurationError("head_qubits must be nonempty")
        if any(not 0 <= q < self.n_qubits for q in self.head_qubits):
            raise ConfigurationError(f"head qubits {self.head_qubits} out of range")

    @classmethod
    def for_task(cls, n_qubits: int, layers: int, n_classes: int | None = None) -> "QnnConfig":
        """Regression head when ``n_classes`` is None, else one qubit per class."""
        if n_classes is None:
            return cls(n_qubits, layers, (0,))
        if n_classes < 2:
            raise ConfigurationError("classification needs at least 2 classes")
        if n_classes > n_qubits:
            raise ConfigurationError(
                f"{n_classes} classes need at least {n_classes} qubits, model has {n_qubits}"
            )
        return cls(n_qubits, layers, tuple(range(n_classes)))

    @property
    def n_params(self) -> int:
        return 3 * self.layers * self.n_qubits


@dataclass(frozen=True)
class ResourceReport:
    n_qubits: int
    trainable_params: int
    rotation_gates: int
    cnot_gates: int
    circuit_depth_gates: int

    def __add__(self, other: "ResourceReport") -> "ResourceReport":
        return ResourceReport(*(a + b for a, b in zip(self.as_tuple(), other.as_tuple())))

    def as_tuple(self) -> tuple[int, ...]:
        return (self.n_qubits, self.trainable_params, self.rotation_gates,
                self.cnot_gates, self.circuit_depth_gates)


@dataclass(frozen=True)
class Backend:
    """Execution backend: ``exact``, ``shots`` or ``noisy``.

    ``seed`` feeds the sampling / trajectory stream when no generator is passed
    explicitly.
    """

    kind: str = "exact"
    shots: int = 0
    noise: NoiseModel | None = None
    trajectories: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("exact", "shots", "noisy"):
            raise ConfigurationError(f"unknown backend kind {self.kind!r}")
        if self.kind == "shots" and self.shots < 1:
            raise ConfigurationError("shots backend needs shots >= 1")
        if self.kind == "noisy":
            if self.noise is None:
                raise ConfigurationError("noisy backend needs a noise model")
            if self.trajectories < 1:
                raise ConfigurationError("noisy backend needs trajectories >= 1")

    @classmethod
    def exact(cls) -> "Backend":
        return cls()

    @classmethod
    def with_shots(cls, shots: int, seed: int = 0) -> "Backend":
        return cls("shots", shots=shots, seed=seed)

    @classmethod
    def noisy(cls, noise: NoiseModel, trajectories: int = 32, seed: int = 0) -> "Backend":
        return cls("noisy", noise=noise, trajectories=trajectories, seed=seed)

    @property
    def is_exact(self) -> bool:
        return self.kind == "exact"


EXACT = Backend()


# ---------------------------------------------------------------------------
# circuit construction

def build_feature_map(x: Sequence[float], n_qubits: int | None = None) -> list[Gate]:
    x = np.asarray(x, dtype=np.float64).ravel()
    if n_qubits is not None and x.size != n_qubits:
        raise ContractViolation(f"expected {n_qubits} features, got {x.size}")
    return [Gate(GateKind.RY, i, angle=float(v)) for i, v in enumerate(x)]


def ansatz_template(config: QnnConfig) -> list[Gate]:
    """Ansatz gates with parameter slots attached and zero angles."""
    return list(_ansatz_template(config.n_qubits, config.layers))


@functools.lru_cache(maxsize=None)
def _ansatz_template(n: int, layers: int) -> tuple[Gate, ...]:
    gates: list[Gate] = []
    chain = [Gate(GateKind.CNOT, i + 1, control=i) for i in range(n - 1)]
    for k in range(layers):
        base = 3 * k * n
        gates += [Gate(GateKind.RX, i, param_slot=base + i) for i in range(n)]
        gates += chain
        gates += [Gate(GateKind.RZ, i, param_slot=base + n + i) for i in range(n)]
        gates += chain
        gates += [Gate(GateKind.RX, i, param_slot=base + 2 * n + i) for i in range(n)]
    return tuple(gates)


def build_ansatz(theta: Sequence[float], config: QnnConfig) -> list[Gate]:
    theta = _check_theta(theta, config)
    return [g if g.param_slot is None else g.with_angle(theta[g.param_slot])
            for g in _ansatz_template(config.n_qubits, config.layers)]


@functools.lru_cache(maxsize=64)
def _program(n: int, layers: int) -> CompiledProgram:
    return CompiledProgram(list(_ansatz_template(n, layers)), n, 3 * n * layers)


def resource_report(config: QnnConfig) -> ResourceReport:
    n, layers = config.n_qubits, config.layers
    rotations = n + 3 * layers * n
    cnots = 2 * layers * (n - 1)
    return ResourceReport(n, 3 * layers * n, rotations, cnots, rotations + cnots)


# ---------------------------------------------------------------------------
# evaluation

def _check_theta(theta, config: QnnConfig) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (config.n_params,):
        raise ContractViolation(f"expected {config.n_params} parameters, got shape {theta.shape}")
    return theta


def _as_batch(x, config: QnnConfig) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x.reshape(1, -1) if single else x
    if x2.ndim != 2 or x2.shape[1] != config.n_qubits:
        raise ContractViolation(f"expected {config.n_qubits} features per sample, got shape {x.shape}")
    return x2, single


def feature_states(X: np.ndarray) -> np.ndarray:
    """Product states RY(x_0)|0> (x) ... (x) RY(x_{n-1})|0>, one row per sample."""
    X = np.asarray(X, dtype=np.float64)
    out = np.ones((X.shape[0], 1), dtype=np.complex128)
    for q in range(X.shape[1]):
        local = np.stack([np.cos(X[:, q] / 2), np.sin(X[:, q] / 2)], axis=1)
        out = (out[:, :, None] * local[:, None, :]).reshape(X.shape[0], -1)
    return np.ascontiguousarray(out)


def _head_values(states: np.ndarray, config: QnnConfig) -> np.ndarray:
    n = config.n_qubits
    return np.stack([simcore.expectation_z_batch(states, n, q) for q in config.head_qubits], axis=1)


def _shot_head_values(states: np.ndarray, config: QnnConfig, shots: int,
                      rng: np.random.Generator) -> np.ndarray:
    n = config.n_qubits
    probs = np.abs(states) ** 2
    probs /= probs.sum(axis=1, keepdims=True)
    counts = rng.multinomial(shots, probs)
    idx = np.arange(states.shape[1])
    out = np.empty((states.shape[0], len(config.head_qubits)))
    for h, q in enumerate(config.head_qubits):
        minus = ((idx >> (n - 1 - q)) & 1).astype(bool)
        out[:, h] = (shots - 2 * counts[:, minus].sum(axis=1)) / shots
    return out


def _noisy_head_values(X: np.ndarray, theta: np.ndarray, config: QnnConfig,
                       backend: Backend, rng: np.random.Generator) -> np.ndarray:
    n, T = config.n_qubits, backend.trajectories
    states = np.repeat(feature_states(X), T, axis=0)
    noise = backend.noise
    for q in range(n):
        simcore.inject_noise_batch(states, n, Gate(GateKind.RY, q), noise, rng)
    for gate in _ansatz_template(n, config.layers):
        simcore.apply_gate_batch(states, n, gate, theta[gate.param_slot])
        simcore.inject_noise_batch(states, n, gate, noise, rng)
    values = _head_values(states, config)
    return values.reshape(X.shape[0], T, -1).mean(axis=1)


def _forward_batch(X: np.ndarray, theta: np.ndarray, config: QnnConfig, backend: Backend,
                   rng: np.random.Generator | None) -> np.ndarray:
    if backend.kind == "noisy":
        return _noisy_head_values(X, theta, config, backend, rng)
    prog = _program(config.n_qubits, config.layers)
    states = feature_states(X)
    prog.forward(states, prog.bind(theta))
    if backend.kind == "shots":
        return _shot_head_values(states, config, backend.shots, rng)
    return _head_values(states, config)


def forward(x, theta, config: QnnConfig, backend: Backend = EXACT,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Head expectations, shape ``(heads,)`` for one sample or ``(batch, heads)``."""
    X, single = _as_batch(x, config)
    theta = _check_theta(theta, config)
    if rng is None and not backend.is_exact:
        rng = np.random.default_rng(backend.seed)
    out = _forward_batch(X, theta, config, backend, rng)
    return out[0] if single else out


def grad_parameter_shift(x, theta, config: QnnConfig, backend: Backend = EXACT,
                         rng: np.random.Generator | None = None) -> np.ndarray:
    """Jacobian of the head outputs, shape ``(heads, P)`` or ``(batch, heads, P)``.

    Every generator is a Pauli, so the two-term shift by pi/2 is exact.
    """
    X, single = _as_batch(x, config)
    theta = _check_theta(theta, config)
    if rng is None and not backend.is_exact:
        rng = np.random.default_rng(backend.seed)
    P = config.n_params
    jac = np.empty((X.shape[0], len(config.head_qubits), P))
    shift = 0.5 * math.pi
    for j in range(P):
        plus = theta.copy()
        plus[j] += shift
        minus = theta.copy()
        minus[j] -= shift
        jac[:, :, j] = 0.5 * (_forward_batch(X, plus, config, backend, rng)
                              - _forward_batch(X, minus, config, backend, rng))
    return jac[0] if single else jac


def grad_adjoint(x, theta, config: QnnConfig, backend: Backend = EXACT) -> np.ndarray:
    """Same Jacobian as :func:`grad_parameter_shift`, by one reverse sweep per head."""
    if not backend.is_exact:
        raise UnsupportedBackendError("adjoint differentiation needs the exact backend")
    X, single = _as_batch(x, config)
    theta = _check_theta(theta, config)
    heads = len(config.head_qubits)
    jac = np.empty((X.shape[0], heads, config.n_params))
    for h in range(heads):
        w = np.zeros((X.shape[0], heads))
        w[:, h] = 1.0
        _, jac[:, h, :] = value_and_vjp(X, theta, config, w)
    return jac[0] if single else jac


def value_and_vjp(X: np.ndarray, theta: np.ndarray, config: QnnConfig,
                  weights: np.ndarray | None = None, weight_fn=None) -> tuple[np.ndarray, np.ndarray]:
    """Exact head values and per-sample vector-Jacobian products.

    Either pass ``weights`` of shape ``(batch, heads)`` directly, or a
    ``weight_fn(values) -> weights`` evaluated on the forward values (lets the
    caller form loss derivatives without a second forward pass).
    Returns ``(values (batch, heads), vjp (batch, P))``.
    """
    X, _ = _as_batch(X, config)
    theta = _check_theta(theta, config)
    prog = _program(config.n_qubits, config.layers)
    bound = prog.bind(theta)
    states = feature_states(X)
    prog.forward(states, bound)
    values = _head_values(states, config)
    if weight_fn is not None:
        weights = weight_fn(values)
    vjp = prog.adjoint(states, bound, np.asarray(config.head_qubits), weights)
    return values, vjp


def init_params(config: QnnConfig, seed) -> np.ndarray:
    """Uniform angles in [0, 2 pi), reproducible from ``seed``."""
    return np.random.default_rng(seed).uniform(0.0, TWO_PI, config.n_params)


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class QnnModel:
    """A QNN architecture plus its trainable angles."""

    config: QnnConfig
    params: np.ndarray = field(default=None)
    n_classes: int | None = None

    def __post_init__(self):
        if self.params is None:
            self.params = np.zeros(self.config.n_params)
        self.params = _check_theta(self.params, self.config).copy()
        if self.n_classes is not None and len(self.config.head_qubits) != self.n_classes:
            raise ConfigurationError("head qubit count must equal the number of classes")

    @classmethod
    def create(cls, n_qubits: int, layers: int, n_classes: int | None = None,
               seed=None) -> "QnnModel":
        config = QnnConfig.for_task(n_qubits, layers, n_classes)
        params = init_params(config, seed) if seed is not None else None
        return cls(config, params, n_classes)

    @property
    def is_classifier(self) -> bool:
        return self.n_classes is not None

    def expectations(self, X, backend: Backend = EXACT, rng=None) -> np.ndarray:
        return forward(np.atleast_2d(X), self.params, self.config, backend, rng)

    def predict(self, X, backend: Backend = EXACT, rng=None) -> np.ndarray:
        """Regression values ``(batch,)`` or class probabilities ``(batch, k)``."""
        z = self.expectations(X, backend, rng)
        return softmax(z) if self.is_classifier else z[:, 0]

    def predict_proba(self, X, backend: Backend = EXACT, rng=None) -> np.ndarray:
        if not self.is_classifier:
            raise ConfigurationError("predict_proba needs a classification model")
        return self.predict(X, backend, rng)

    def resources(self) -> ResourceReport:
        return resource_report(self.config)
