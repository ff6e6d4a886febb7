"""Dense statevector simulator.

Qubit convention: qubit 0 is the most significant bit of the basis index, so
for ``n`` qubits the basis state ``|b_0 b_1 ... b_{n-1}>`` sits at index
``sum(b_q << (n - 1 - q))``.

Internally every kernel works on a batch of states stored as a C-contiguous
``(batch, 2**n)`` complex128 array and updates it in place. The single-state
API (:class:`StateVector`, :func:`apply_gate`, ...) wraps the same kernels
with a batch of one.

Noise is emulated with stochastic Pauli trajectories: after each gate, every
touched qubit independently receives a uniformly chosen X, Y or Z with the
gate's error probability. Averaging many trajectories reproduces the
depolarizing channel without storing a density matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numba as nb
import numpy as np

from .errors import ConfigurationError, ContractViolation

MAX_QUBITS = 16

# Lagos calibration magnitudes and coupling map (metadata only).
LAGOS_SINGLE_QUBIT_ERROR = 2.89e-4
LAGOS_TWO_QUBIT_ERROR = 8.63e-3
LAGOS_TOPOLOGY = ((0, 1), (1, 2), (1, 3), (3, 4), (4, 5), (4, 6))


class GateKind(str, Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    CNOT = "CNOT"


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    target: int
    control: int | None = None
    angle: float = 0.0
    param_slot: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        if self.kind is GateKind.CNOT:
            if self.control is None:
                raise ContractViolation("CNOT needs a control qubit")
            if self.control == self.target:
                raise ContractViolation("control and target must differ")
        elif self.control is not None:
            raise ContractViolation(f"{self.kind.value} takes no control qubit")
        if self.target < 0 or (self.control is not None and self.control < 0):
            raise ContractViolation("qubit indices must be nonnegative")

    @property
    def qubits(self) -> tuple[int, ...]:
        if self.control is None:
            return (self.target,)
        return (self.control, self.target)

    def with_angle(self, angle: float) -> "Gate":
        return Gate(self.kind, self.target, self.control, float(angle), self.param_slot)


@dataclass(frozen=True)
class NoiseModel:
    single_qubit_error: float = 0.0
    two_qubit_error: float = 0.0
    topology: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        for p in (self.single_qubit_error, self.two_qubit_error):
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"error probability {p} outside [0, 1]")

    @classmethod
    def lagos(cls) -> "NoiseModel":
        return cls(LAGOS_SINGLE_QUBIT_ERROR, LAGOS_TWO_QUBIT_ERROR, LAGOS_TOPOLOGY)

    def error_rate(self, gate: Gate) -> float:
        return self.two_qubit_error if gate.kind is GateKind.CNOT else self.single_qubit_error

    @property
    def is_noiseless(self) -> bool:
        return self.single_qubit_error == 0.0 and self.two_qubit_error == 0.0


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (1 << self.n_qubits,):
            raise ContractViolation(
                f"expected {1 << self.n_qubits} amplitudes, got {self.amplitudes.shape}"
            )

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


# ---------------------------------------------------------------------------
# kernels on (batch, 2**n) arrays

@nb.njit(cache=True)
def _k_apply_1q(states, n, q, m00, m01, m10, m11):
    stride = 1 << (n - 1 - q)
    dim = states.shape[1]
    for b in range(states.shape[0]):
        row = states[b]
        for hi in range(0, dim, 2 * stride):
            for i0 in range(hi, hi + stride):
                i1 = i0 + stride
                a0 = row[i0]
                a1 = row[i1]
                row[i0] = m00 * a0 + m01 * a1
                row[i1] = m10 * a0 + m11 * a1


@nb.njit(cache=True)
def _k_apply_rx(states, n, q, c, s):
    # [[c, -is], [-is, c]]
    stride = 1 << (n - 1 - q)
    dim = states.shape[1]
    for b in range(states.shape[0]):
        row = states[b]
        for hi in range(0, dim, 2 * stride):
            for i0 in range(hi, hi + stride):
                i1 = i0 + stride
                a0 = row[i0]
                a1 = row[i1]
                row[i0] = complex(c * a0.real + s * a1.imag, c * a0.imag - s * a1.real)
                row[i1] = complex(c * a1.real + s * a0.imag, c * a1.imag - s * a0.real)


@nb.njit(cache=True)
def _k_apply_ry(states, n, q, c, s):
    # [[c, -s], [s, c]]
    stride = 1 << (n - 1 - q)
    dim = states.shape[1]
    for b in range(states.shape[0]):
        row = states[b]
        for hi in range(0, dim, 2 * stride):
            for i0 in range(hi, hi + stride):
                i1 = i0 + stride
                a0 = row[i0]
                a1 = row[i1]
                row[i0] = c * a0 - s * a1
                row[i1] = s * a0 + c * a1


@nb.njit(cache=True)
def _k_apply_diag(states, n, q, d0, d1):
    stride = 1 << (n - 1 - q)
    dim = states.shape[1]
    for b in range(states.shape[0]):
        row = states[b]
        for hi in range(0, dim, 2 * stride):
            for i0 in range(hi, hi + stride):
                row[i0] *= d0
                row[i0 + stride] *= d1


@nb.njit(cache=True)
def _k_apply_cnot(states, n, control, target):
    cbit = 1 << (n - 1 - control)
    tbit = 1 << (n - 1 - target)
    dim = states.shape[1]
    for b in range(states.shape[0]):
        row = states[b]
        for i in range(dim):
            if (i & cbit) and not (i & tbit):
                j = i | tbit
                tmp = row[i]
                row[i] = row[j]
                row[j] = tmp


@nb.njit(cache=True)
def _k_expect_z(states, n, q, out):
    stride = 1 << (n - 1 - q)
    dim = states.shape[1]
    for b in range(states.shape[0]):
        row = states[b]
        acc = 0.0
        for hi in range(0, dim, 2 * stride):
            for i0 in range(hi, hi + stride):
                a0 = row[i0]
                a1 = row[i0 + stride]
                acc += a0.real * a0.real + a0.imag * a0.imag
                acc -= a1.real * a1.real + a1.imag * a1.imag
        out[b] = acc


@nb.njit(cache=True)
def _k_im_pauli_inner(lam, phi, n, q, pauli, out):
    """out[b] = Im <lam_b| P_q |phi_b> for P in {X=0, Y=1, Z=2}."""
    stride = 1 << (n - 1 - q)
    dim = phi.shape[1]
    for b in range(phi.shape[0]):
        lr = lam[b]
        pr = phi[b]
        acc = 0j
        for hi in range(0, dim, 2 * stride):
            for i0 in range(hi, hi + stride):
                i1 = i0 + stride
                l0 = lr[i0].conjugate()
                l1 = lr[i1].conjugate()
                if pauli == 0:
                    acc += l0 * pr[i1] + l1 * pr[i0]
                elif pauli == 1:
                    acc += -1j * l0 * pr[i1] + 1j * l1 * pr[i0]
                else:
                    acc += l0 * pr[i0] - l1 * pr[i1]
        out[b] = acc.imag


@nb.njit(cache=True)
def _k_scale_z_add(src, n, q, weights, dst):
    """dst[b] += weights[b] * Z_q src[b]."""
    stride = 1 << (n - 1 - q)
    dim = src.shape[1]
    for b in range(src.shape[0]):
        w = weights[b]
        if w == 0.0:
            continue
        for hi in range(0, dim, 2 * stride):
            for i0 in range(hi, hi + stride):
                dst[b, i0] += w * src[b, i0]
                dst[b, i0 + stride] -= w * src[b, i0 + stride]



_PAULI_X, _PAULI_Y, _PAULI_Z = 0, 1, 2
GENERATOR_PAULI = {GateKind.RX: _PAULI_X, GateKind.RY: _PAULI_Y, GateKind.RZ: _PAULI_Z}


def _check_n(n_qubits: int) -> None:
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"n_qubits must be in 1..{MAX_QUBITS}, got {n_qubits!r}")


def _check_gate(gate: Gate, n_qubits: int) -> None:
    for q in gate.qubits:
        if q >= n_qubits:
            raise ContractViolation(f"qubit {q} out of range for {n_qubits} qubits")


def apply_rotation_batch(states: np.ndarray, n: int, kind: GateKind, qubit: int, angle: float) -> None:
    """In-place RX/RY/RZ(angle) on ``qubit`` of every row of ``states``."""
    half = 0.5 * angle
    c, s = math.cos(half), math.sin(half)
    if kind is GateKind.RX:
        _k_apply_rx(states, n, qubit, c, s)
    elif kind is GateKind.RY:
        _k_apply_ry(states, n, qubit, c, s)
    elif kind is GateKind.RZ:
        _k_apply_diag(states, n, qubit, complex(c, -s), complex(c, s))
    else:
        raise ContractViolation(f"{kind} is not a rotation")


def apply_gate_batch(states: np.ndarray, n: int, gate: Gate, angle: float | None = None) -> None:
    """In-place application of ``gate`` to each row. ``angle`` overrides gate.angle."""
    if gate.kind is GateKind.CNOT:
        _k_apply_cnot(states, n, gate.control, gate.target)
    else:
        apply_rotation_batch(states, n, gate.kind, gate.target, gate.angle if angle is None else angle)


def apply_pauli_batch(states: np.ndarray, n: int, qubit: int, pauli: int) -> None:
    if pauli == _PAULI_X:
        _k_apply_1q(states, n, qubit, 0j, 1 + 0j, 1 + 0j, 0j)
    elif pauli == _PAULI_Y:
        _k_apply_1q(states, n, qubit, 0j, -1j, 1j, 0j)
    else:
        _k_apply_diag(states, n, qubit, 1 + 0j, -1 + 0j)


def expectation_z_batch(states: np.ndarray, n: int, qubit: int) -> np.ndarray:
    out = np.empty(states.shape[0])
    _k_expect_z(states, n, qubit, out)
    return out


def im_pauli_inner_batch(lam: np.ndarray, phi: np.ndarray, n: int, qubit: int, pauli: int) -> np.ndarray:
    out = np.empty(phi.shape[0])
    _k_im_pauli_inner(lam, phi, n, qubit, pauli, out)
    return out


def add_weighted_z_batch(src: np.ndarray, n: int, qubit: int, weights: np.ndarray, dst: np.ndarray) -> None:
    _k_scale_z_add(src, n, qubit, np.ascontiguousarray(weights, dtype=np.float64), dst)


def inject_noise_batch(states: np.ndarray, n: int, gate: Gate, noise: NoiseModel,
                       rng: np.random.Generator) -> int:
    """Pauli-trajectory noise after ``gate``; returns the number of injected errors."""
    p = noise.error_rate(gate)
    if p == 0.0:
        return 0
    injected = 0
    for q in gate.qubits:
        hit = np.flatnonzero(rng.random(states.shape[0]) < p)
        if hit.size == 0:
            continue
        which = rng.integers(0, 3, size=hit.size)
        for pauli in (_PAULI_X, _PAULI_Y, _PAULI_Z):
            rows = hit[which == pauli]
            if rows.size:
                sub = np.ascontiguousarray(states[rows])
                apply_pauli_batch(sub, n, q, pauli)
                states[rows] = sub
        injected += hit.size
    return injected


# ---------------------------------------------------------------------------
# single-state API

_PAULIS = {
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def zero_state(n_qubits: int) -> StateVector:
    _check_n(n_qubits)
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(int(n_qubits), amps)


def gate_matrix(gate: Gate) -> np.ndarray:
    """2x2 matrix for rotations, 4x4 for CNOT in (control, target) order."""
    if gate.kind is GateKind.CNOT:
        m = np.eye(4, dtype=np.complex128)
        m[2:, 2:] = _PAULIS["X"]
        return m
    c, s = math.cos(gate.angle / 2), math.sin(gate.angle / 2)
    generator = _PAULIS[gate.kind.value[1].upper()]
    return c * np.eye(2, dtype=np.complex128) - 1j * s * generator


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    _check_gate(gate, state.n_qubits)
    out = state.amplitudes.copy().reshape(1, -1)
    apply_gate_batch(out, state.n_qubits, gate)
    return StateVector(state.n_qubits, out[0])


def expectation_z(state: StateVector, qubit: int) -> float:
    if not 0 <= qubit < state.n_qubits:
        raise ContractViolation(f"qubit {qubit} out of range")
    return float(expectation_z_batch(state.amplitudes.reshape(1, -1), state.n_qubits, qubit)[0])


def sample_counts(state: StateVector, shots: int, rng_seed: int | np.random.Generator) -> np.ndarray:
    """Histogram (length 2**n) of ``shots`` computational-basis measurements."""
    if shots < 1:
        raise ConfigurationError("shots must be >= 1")
    rng = np.random.default_rng(rng_seed)
    probs = state.probabilities()
    probs = probs / probs.sum()
    return rng.multinomial(shots, probs)


def shot_expectation_z(state: StateVector, qubit: int, shots: int,
                       rng_seed: int | np.random.Generator) -> float:
    if not 0 <= qubit < state.n_qubits:
        raise ContractViolation(f"qubit {qubit} out of range")
    counts = sample_counts(state, shots, rng_seed)
    bit = (np.arange(counts.size) >> (state.n_qubits - 1 - qubit)) & 1
    n_minus = int(counts[bit == 1].sum())
    return (shots - 2 * n_minus) / shots


def apply_gate_noisy(state: StateVector, gate: Gate, noise: NoiseModel,
                     rng: np.random.Generator) -> StateVector:
    _check_gate(gate, state.n_qubits)
    out = state.amplitudes.copy().reshape(1, -1)
    apply_gate_batch(out, state.n_qubits, gate)
    inject_noise_batch(out, state.n_qubits, gate, noise, rng)
    return StateVector(state.n_qubits, out[0])


def run_circuit(state: StateVector, gates, noise: NoiseModel | None = None,
                rng: np.random.Generator | None = None) -> StateVector:
    out = state.amplitudes.copy().reshape(1, -1)
    for gate in gates:
        _check_gate(gate, state.n_qubits)
        apply_gate_batch(out, state.n_qubits, gate)
        if noise is not None:
            inject_noise_batch(out, state.n_qubits, gate, noise, rng)
    return StateVector(state.n_qubits, out[0])
