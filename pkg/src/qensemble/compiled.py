"""Compiled gate programs for fast exact evaluation and adjoint gradients.

A gate list is lowered once into a short sequence of fused operations:

* a run of consecutive CNOTs becomes one basis permutation,
* a run of consecutive RZ gates becomes one diagonal phase,
* a run of consecutive RX (or RY) gates keeps one rotation per qubit, with
  same-qubit angles summed (they commute).

Each rotation angle in the fused program is an *entry*: a constant offset plus
the sum of the trainable slots that were merged into it. The derivative with
respect to any merged slot equals the derivative with respect to its entry.

Every row of the state batch is pushed through the whole program before the
next row is touched, which keeps the working set cache resident.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from .errors import ContractViolation
from .simcore import Gate, GateKind

OP_RX, OP_RY, OP_RZ, OP_PERM, OP_DIAG = 0, 1, 2, 3, 4
_ROT_CODE = {GateKind.RX: OP_RX, GateKind.RY: OP_RY, GateKind.RZ: OP_RZ}


@nb.njit(cache=True, inline="always")
def _rot_row(row, n, kind, q, c, s):
    dim = row.shape[0]
    stride = 1 << (n - 1 - q)
    if kind == 0:
        for hi in range(0, dim, 2 * stride):
            for i0 in range(hi, hi + stride):
                i1 = i0 + stride
                a0r = row[i0].real
                a0i = row[i0].imag
                a1r = row[i1].real
                a1i = row[i1].imag
                row[i0] = complex(c * a0r + s * a1i, c * a0i - s * a1r)
                row[i1] = complex(c * a1r + s * a0i, c * a1i - s * a0r)
    elif kind == 1:
        for hi in range(0, dim, 2 * stride):
            for i0 in range(hi, hi + stride):
                i1 = i0 + stride
                a0 = row[i0]
                a1 = row[i1]
                row[i0] = c * a0 - s * a1
                row[i1] = s * a0 + c * a1
    else:
        d0 = complex(c, -s)
        d1 = complex(c, s)
        for hi in range(0, dim, 2 * stride):
            for i0 in range(hi, hi + stride):
                row[i0] *= d0
                row[i0 + stride] *= d1


@nb.njit(cache=True, inline="always")
def _im_inner_row(lam, phi, n, kind, q):
    """Im <lam| P_q |phi> with P the generator of rotation ``kind``."""
    dim = phi.shape[0]
    stride = 1 << (n - 1 - q)
    acc = 0.0
    if kind == 0:
        for hi in range(0, dim, 2 * stride):
            for i0 in range(hi, hi + stride):
                i1 = i0 + stride
                acc += (lam[i0].real * phi[i1].imag - lam[i0].imag * phi[i1].real
                        + lam[i1].real * phi[i0].imag - lam[i1].imag * phi[i0].real)
    elif kind == 1:
        for hi in range(0, dim, 2 * stride):
            for i0 in range(hi, hi + stride):
                i1 = i0 + stride
                acc += (lam[i1].real * phi[i0].real + lam[i1].imag * phi[i0].imag
                        - lam[i0].real * phi[i1].real - lam[i0].imag * phi[i1].imag)
    else:
        for hi in range(0, dim, 2 * stride):
            for i0 in range(hi, hi + stride):
                i1 = i0 + stride
                acc += (lam[i0].real * phi[i0].imag - lam[i0].imag * phi[i0].real
                        - lam[i1].real * phi[i1].imag + lam[i1].imag * phi[i1].real)
    return acc


@nb.njit(cache=True, inline="always")
def _apply_row(row, tmp, n, kind, q, e, ent_c, ent_s, aux, perms, phases, inverse):
    if kind <= 2:
        s = -ent_s[e] if inverse else ent_s[e]
        _rot_row(row, n, kind, q, ent_c[e], s)
    elif kind == OP_PERM:
        p = perms[aux]
        for i in range(row.shape[0]):
            tmp[i] = row[p[i]]
        row[:] = tmp
    else:
        ph = phases[aux]
        if inverse:
            for i in range(row.shape[0]):
                row[i] *= ph[i].conjugate()
        else:
            for i in range(row.shape[0]):
                row[i] *= ph[i]


@nb.njit(cache=True)
def _k_forward(states, n, kinds, qs, ebeg, ent_c, ent_s, aux, perms, phases):
    tmp = np.empty(states.shape[1], dtype=np.complex128)
    for b in range(states.shape[0]):
        row = states[b]
        for k in range(kinds.shape[0]):
            _apply_row(row, tmp, n, kinds[k], qs[k], ebeg[k], ent_c, ent_s,
                       aux[k], perms, phases, False)


@nb.njit(cache=True)
def _k_adjoint(states, n, kinds, qs, ebeg, ecnt, ent_q, ent_c, ent_s, aux,
               inv_perms, phases, heads, g, grads):
    dim = states.shape[1]
    lam = np.empty(dim, dtype=np.complex128)
    tmp = np.empty(dim, dtype=np.complex128)
    for b in range(states.shape[0]):
        phi = states[b]
        lam[:] = 0.0
        for h in range(heads.shape[0]):
            w = g[b, h]
            if w == 0.0:
                continue
            stride = 1 << (n - 1 - heads[h])
            for hi in range(0, dim, 2 * stride):
                for i0 in range(hi, hi + stride):
                    lam[i0] += w * phi[i0]
                    lam[i0 + stride] -= w * phi[i0 + stride]
        for k in range(kinds.shape[0] - 1, -1, -1):
            kind = kinds[k]
            e = ebeg[k]
            if kind <= 2:
                grads[b, e] = _im_inner_row(lam, phi, n, kind, qs[k])
            elif kind == OP_DIAG:
                cnt = ecnt[k]
                for j in range(cnt):
                    grads[b, e + j] = 0.0
                for i in range(dim):
                    t = lam[i].real * phi[i].imag - lam[i].imag * phi[i].real
                    for j in range(cnt):
                        if (i >> (n - 1 - ent_q[e + j])) & 1:
                            grads[b, e + j] -= t
                        else:
                            grads[b, e + j] += t
            _apply_row(phi, tmp, n, kind, qs[k], e, ent_c, ent_s, aux[k],
                       inv_perms, phases, True)
            _apply_row(lam, tmp, n, kind, qs[k], e, ent_c, ent_s, aux[k],
                       inv_perms, phases, True)


def _cnot_run_permutation(n: int, cnots: list[Gate]) -> tuple[np.ndarray, np.ndarray]:
    """Gather indices for a CNOT run: new = old[gather]; and its inverse."""
    idx = np.arange(1 << n, dtype=np.int64)
    image = idx.copy()
    for g in cnots:
        cbit = 1 << (n - 1 - g.control)
        tbit = 1 << (n - 1 - g.target)
        image = np.where(image & cbit, image ^ tbit, image)
    # basis state i is sent to image[i]
    gather = np.empty_like(idx)
    gather[image] = idx
    return gather, image.copy()


@dataclass
class BoundProgram:
    program: "CompiledProgram"
    ent_c: np.ndarray
    ent_s: np.ndarray
    phases: np.ndarray


class CompiledProgram:
    """Fused form of a gate list over ``n_qubits``.

    Gates with ``param_slot`` take their angle from the parameter vector passed
    to :meth:`bind`; the rest use their fixed ``angle``.
    """

    def __init__(self, gates: list[Gate], n_qubits: int, n_params: int):
        self.n_qubits = n = n_qubits
        self.n_params = n_params
        kinds, qs, ebeg, ecnt, aux = [], [], [], [], []
        ent_q: list[int] = []
        ent_const: list[float] = []
        ent_slots: list[list[int]] = []
        gathers, scatters, diag_entries = [], [], []

        i = 0
        while i < len(gates):
            g = gates[i]
            for q in g.qubits:
                if q >= n:
                    raise ContractViolation(f"qubit {q} out of range for {n} qubits")
            j = i
            while j < len(gates) and gates[j].kind is g.kind:
                j += 1
            run = gates[i:j]
            if g.kind is GateKind.CNOT:
                gather, scatter = _cnot_run_permutation(n, run)
                kinds.append(OP_PERM); qs.append(0); ebeg.append(0); ecnt.append(0)
                aux.append(len(gathers))
                gathers.append(gather); scatters.append(scatter)
            else:
                order: list[int] = []
                per_q: dict[int, tuple[float, list[int]]] = {}
                for r in run:
                    const, slots = per_q.get(r.target, (0.0, []))
                    if r.param_slot is None:
                        const += r.angle
                    else:
                        slots = slots + [r.param_slot]
                    if r.target not in per_q:
                        order.append(r.target)
                    per_q[r.target] = (const, slots)
                if g.kind is GateKind.RZ:
                    kinds.append(OP_DIAG); qs.append(0); ebeg.append(len(ent_q)); ecnt.append(len(order))
                    aux.append(len(diag_entries))
                    diag_entries.append(list(range(len(ent_q), len(ent_q) + len(order))))
                    for q in order:
                        ent_q.append(q); ent_const.append(per_q[q][0]); ent_slots.append(per_q[q][1])
                else:
                    for q in order:
                        kinds.append(_ROT_CODE[g.kind]); qs.append(q); ebeg.append(len(ent_q)); ecnt.append(1)
                        aux.append(0)
                        ent_q.append(q); ent_const.append(per_q[q][0]); ent_slots.append(per_q[q][1])
            i = j

        as_i = lambda v: np.asarray(v, dtype=np.int64)
        self.kinds, self.qs, self.ebeg, self.ecnt, self.aux = map(as_i, (kinds, qs, ebeg, ecnt, aux))
        self.ent_q = as_i(ent_q)
        self.ent_const = np.asarray(ent_const, dtype=np.float64)
        self.n_entries = len(ent_q)
        dim = 1 << n
        self.gathers = np.asarray(gathers, dtype=np.int64).reshape(-1, dim) if gathers else np.zeros((1, dim), np.int64)
        self.scatters = np.asarray(scatters, dtype=np.int64).reshape(-1, dim) if scatters else np.zeros((1, dim), np.int64)
        self.diag_entries = diag_entries

        self.entry_of_slot = np.full(n_params, -1, dtype=np.int64)
        for e, slots in enumerate(ent_slots):
            for sl in slots:
                if not 0 <= sl < n_params:
                    raise ContractViolation(f"param slot {sl} out of range")
                if self.entry_of_slot[sl] != -1:
                    raise ContractViolation(f"param slot {sl} used twice")
                self.entry_of_slot[sl] = e
        # bit_signs[i, q] = +1 if qubit q is 0 in basis index i
        bits = (np.arange(dim)[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
        self._signs = 1.0 - 2.0 * bits

    def bind(self, theta: np.ndarray) -> BoundProgram:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_params,):
            raise ContractViolation(f"expected {self.n_params} parameters, got {theta.shape}")
        angles = self.ent_const.copy()
        used = self.entry_of_slot >= 0
        np.add.at(angles, self.entry_of_slot[used], theta[used])
        half = 0.5 * angles
        if self.diag_entries:
            phases = np.empty((len(self.diag_entries), 1 << self.n_qubits), dtype=np.complex128)
            for d, ents in enumerate(self.diag_entries):
                # RZ(t) contributes exp(-i t/2) on bit 0 and exp(+i t/2) on bit 1
                phase = -(self._signs[:, self.ent_q[ents]] @ half[ents])
                phases[d] = np.exp(1j * phase)
        else:
            phases = np.ones((1, 1 << self.n_qubits), dtype=np.complex128)
        return BoundProgram(self, np.cos(half), np.sin(half), phases)

    def forward(self, states: np.ndarray, bound: BoundProgram) -> None:
        """Run the program in place on every row of ``states``."""
        _k_forward(states, self.n_qubits, self.kinds, self.qs, self.ebeg,
                   bound.ent_c, bound.ent_s, self.aux, self.gathers, bound.phases)

    def adjoint(self, final_states: np.ndarray, bound: BoundProgram, heads: np.ndarray,
                weights: np.ndarray) -> np.ndarray:
        """Per-row gradient of ``sum_h weights[b, h] <Z_heads[h]>`` w.r.t. the parameters.

        ``final_states`` is consumed. Returns an array of shape (batch, n_params).
        """
        batch = final_states.shape[0]
        grads = np.zeros((batch, max(self.n_entries, 1)))
        _k_adjoint(final_states, self.n_qubits, self.kinds, self.qs, self.ebeg, self.ecnt,
                   self.ent_q, bound.ent_c, bound.ent_s, self.aux, self.scatters,
                   bound.phases, np.asarray(heads, dtype=np.int64),
                   np.ascontiguousarray(weights, dtype=np.float64), grads)
        out = np.zeros((batch, self.n_params))
        used = self.entry_of_slot >= 0
        out[:, used] = grads[:, self.entry_of_slot[used]]
        return out
