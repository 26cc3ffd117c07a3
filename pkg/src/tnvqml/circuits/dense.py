"""Dense statevector and operator kernels, used for small systems and as oracles.

Tensors carry one axis of size 2 per qubit. Statevector batches have shape
``(B, 2, ..., 2)``; operators have shape ``(2,)*n + (2,)*n`` (rows, then
columns) with an optional leading batch axis.
"""

from __future__ import annotations

import numpy as np

from .gates import PAULI_LETTERS, PAULIS, H
from .spec import CircuitSpec

MAX_STATEVECTOR_QUBITS = 14
MAX_DENSITY_QUBITS = 10
# Scratch budget of the batched density-matrix oracle, in complex entries.
DENSITY_BATCH_ENTRIES = 1 << 24


class SizeLimitError(ValueError):
    """Raised when a dense routine would exceed its configured qubit cap."""


def apply_1q(t: np.ndarray, u: np.ndarray, axis: int) -> np.ndarray:
    """Contract ``u``'s input leg with ``axis`` of ``t``."""
    return np.moveaxis(np.tensordot(u, t, axes=(1, axis)), 0, axis)


def apply_cx(t: np.ndarray, c: int, tg: int) -> np.ndarray:
    """CNOT on axes ``(c, tg)``: flip ``tg`` where ``c`` is 1."""
    out = t.copy()
    idx = [slice(None)] * t.ndim
    idx[c] = 1
    sub_axis = tg - 1 if tg > c else tg
    out[tuple(idx)] = np.flip(t[tuple(idx)], axis=sub_axis)
    return out


def apply_depolarizing(t: np.ndarray, gamma: float, axes: tuple[int, int, int, int]) -> np.ndarray:
    """Two-qubit depolarizing channel on an operator tensor.

    ``axes`` are the row axes of the two qubits followed by their column axes.
    Uses ``E(A) = (1 - gamma) A + gamma / 4 * Tr_ab(A) (x) I_ab``.
    """
    b = np.moveaxis(t, axes, (0, 1, 2, 3))
    tr = b[0, 0, 0, 0] + b[0, 1, 0, 1] + b[1, 0, 1, 0] + b[1, 1, 1, 1]
    out = (1.0 - gamma) * b
    for i in range(2):
        for j in range(2):
            out[i, j, i, j] += 0.25 * gamma * tr
    return np.moveaxis(out, (0, 1, 2, 3), axes)


def apply_ops_state(psi: np.ndarray, ops: list[tuple], offset: int = 1) -> np.ndarray:
    """Apply unitary gate-list entries to a (batched) statevector tensor."""
    for op in ops:
        if op[0] == "u":
            psi = apply_1q(psi, op[2], offset + op[1])
        elif op[0] == "cx":
            psi = apply_cx(psi, offset + op[1], offset + op[2])
        else:
            raise ValueError(f"gate {op[0]!r} is not unitary")
    return psi


def apply_ops_operator(
    a: np.ndarray, ops: list[tuple], n: int, heisenberg: bool = False, offset: int = 0
) -> np.ndarray:
    """Evolve an operator tensor through a gate list.

    Schrodinger picture maps ``A -> E(A)`` in time order. The Heisenberg
    picture applies the adjoint channels in reverse order, giving ``W^dag A W``
    for a unitary list.
    """
    seq = reversed(ops) if heisenberg else ops
    for op in seq:
        if op[0] == "u":
            u = op[2].conj().T if heisenberg else op[2]
            a = apply_1q(a, u, offset + op[1])
            a = apply_1q(a, u.conj(), offset + n + op[1])
        elif op[0] == "cx":
            a = apply_cx(a, offset + op[1], offset + op[2])
            a = apply_cx(a, offset + n + op[1], offset + n + op[2])
        elif op[0] == "dep":
            _, p, q, g = op
            a = apply_depolarizing(a, g, (offset + p, offset + q, offset + n + p, offset + n + q))
        else:
            raise ValueError(f"unknown gate {op[0]!r}")
    return a


def pauli_operator_tensor(letters: str) -> np.ndarray:
    """Dense Pauli string as an operator tensor of shape ``(2,)*2n``."""
    n = len(letters)
    out = np.ones((), dtype=complex)
    for ch in letters:
        out = np.multiply.outer(out, PAULIS[PAULI_LETTERS.index(ch)])
    # axes are (r1, c1, r2, c2, ...); reorder to rows then columns
    return np.transpose(out, [2 * s for s in range(n)] + [2 * s + 1 for s in range(n)])


def zero_projector_tensor(n: int) -> np.ndarray:
    out = np.zeros((2,) * (2 * n), dtype=complex)
    out[(0,) * (2 * n)] = 1.0
    return out


def _z_phases(phi: np.ndarray) -> np.ndarray:
    """Per-qubit ``Rz`` diagonals, shape ``(B, n, 2)``."""
    return np.stack([np.exp(-0.5j * phi), np.exp(0.5j * phi)], axis=-1)


def _apply_diag_state(psi: np.ndarray, diag: np.ndarray) -> np.ndarray:
    """Multiply a batched state by per-qubit diagonals of shape ``(B, n, 2)``."""
    b, n = diag.shape[:2]
    for q in range(n):
        shape = [b] + [1] * n
        shape[1 + q] = 2
        psi = psi * diag[:, q, :].reshape(shape)
    return psi


def _apply_diag_operator(rho: np.ndarray, diag: np.ndarray) -> np.ndarray:
    b, n = diag.shape[:2]
    for q in range(n):
        shape = [b] + [1] * (2 * n)
        shape[1 + q] = 2
        rho = rho * diag[:, q, :].reshape(shape)
        shape[1 + q] = 1
        shape[1 + n + q] = 2
        rho = rho * diag[:, q, :].conj().reshape(shape)
    return rho


def _pauli_expectation_states(psi: np.ndarray, letters: str) -> np.ndarray:
    phi = psi
    for q, ch in enumerate(letters):
        if ch != "I":
            phi = apply_1q(phi, PAULIS[PAULI_LETTERS.index(ch)], 1 + q)
    b = psi.shape[0]
    return np.einsum("bi,bi->b", psi.reshape(b, -1).conj(), phi.reshape(b, -1))


def _pauli_expectation_operators(rho: np.ndarray, letters: str) -> np.ndarray:
    n = len(letters)
    out = rho
    for q, ch in enumerate(letters):
        if ch != "I":
            # Tr(P rho) = sum P_{ab} rho_{ba}; left-multiply the rows
            out = apply_1q(out, PAULIS[PAULI_LETTERS.index(ch)], 1 + q)
    b = rho.shape[0]
    d = 2**n
    return np.trace(out.reshape(b, d, d), axis1=1, axis2=2)


def statevector_model_eval(spec: CircuitSpec, xs) -> np.ndarray | float:
    """Exact model output ``<0|U^dag O U|0>`` for one input or a batch.

    Noiseless models use a statevector (``n_q <= 14``); noisy ones a density
    matrix (``n_q <= 10``). A 2-D ``xs`` (or 1-D for scalar encodings) is a
    batch and returns an array; a single input returns a float.
    """
    n = spec.n_q
    xs_arr = np.asarray(xs, dtype=float)
    single = xs_arr.ndim == 0 or (xs_arr.ndim == 1 and spec.encoding.input_dim > 1)
    batch = xs_arr.reshape(1, -1) if single else xs_arr
    angles = spec.encoding.angles_batch(batch).reshape(batch.shape[0], spec.n_reuploads, n)
    if spec.gamma > 0:
        if n > MAX_DENSITY_QUBITS:
            raise SizeLimitError(f"density-matrix oracle limited to {MAX_DENSITY_QUBITS} qubits, got {n}")
        step = max(1, DENSITY_BATCH_ENTRIES // 4**n)
        vals = np.concatenate(
            [_density_eval(spec, angles[i : i + step]) for i in range(0, angles.shape[0], step)]
        )
    else:
        if n > MAX_STATEVECTOR_QUBITS:
            raise SizeLimitError(f"statevector oracle limited to {MAX_STATEVECTOR_QUBITS} qubits, got {n}")
        step = max(1, DENSITY_BATCH_ENTRIES // 2**n)
        vals = np.concatenate(
            [_state_eval(spec, angles[i : i + step]) for i in range(0, angles.shape[0], step)]
        )
    if np.abs(vals.imag).max(initial=0.0) > 1e-10:
        raise ArithmeticError("model output has a non-negligible imaginary part")
    vals = vals.real
    return float(vals[0]) if single else vals


def _state_eval(spec: CircuitSpec, angles: np.ndarray) -> np.ndarray:
    n, b = spec.n_q, angles.shape[0]
    psi = np.zeros((b,) + (2,) * n, dtype=complex)
    psi[(slice(None),) + (0,) * n] = 1.0
    for blk in range(len(spec.layers)):
        psi = apply_ops_state(psi, spec.block_ops(blk, noisy=False))
        if blk < spec.n_reuploads:
            psi = _apply_diag_state(psi, _z_phases(angles[:, blk]))
    return _pauli_expectation_states(psi, spec.observable)


def _density_eval(spec: CircuitSpec, angles: np.ndarray) -> np.ndarray:
    n, b = spec.n_q, angles.shape[0]
    rho = np.zeros((b,) + (2,) * (2 * n), dtype=complex)
    rho[(slice(None),) + (0,) * (2 * n)] = 1.0
    for blk in range(len(spec.layers)):
        rho = apply_ops_operator(rho, spec.block_ops(blk), n, offset=1)
        if blk < spec.n_reuploads:
            rho = _apply_diag_operator(rho, _z_phases(angles[:, blk]))
    return _pauli_expectation_operators(rho, spec.observable)


def encoding_states(kind: str, xs, repetitions: int = 2) -> np.ndarray:
    """Batched data-encoded states ``S(x)|0>`` as flat vectors, shape ``(B, 2^n)``.

    ``kind`` is ``"product"`` (Hadamard then ``Rz(x_i)`` on each qubit, no
    entangling gates) or ``"iqp"`` (per repetition: Hadamard layer, ``Rz(x_i)``
    on each qubit, then ``exp(-i x_i x_{i+1} Z_i Z_{i+1} / 2)`` on neighbours).
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    b, n = xs.shape
    if n > MAX_STATEVECTOR_QUBITS:
        raise SizeLimitError(f"statevector limited to {MAX_STATEVECTOR_QUBITS} qubits, got {n}")
    if kind not in ("product", "iqp"):
        raise ValueError(f"unknown encoding circuit {kind!r}")
    reps = 1 if kind == "product" else repetitions
    psi = np.zeros((b,) + (2,) * n, dtype=complex)
    psi[(slice(None),) + (0,) * n] = 1.0
    # Z eigenvalue (+1, -1) of each basis index per qubit
    zvals = 1 - 2 * np.indices((2,) * n).reshape(n, -1)
    for _ in range(reps):
        for q in range(n):
            psi = apply_1q(psi, H, 1 + q)
        psi = _apply_diag_state(psi, _z_phases(xs))
        if kind == "iqp" and n > 1:
            prods = xs[:, :-1] * xs[:, 1:]
            zz = zvals[:-1] * zvals[1:]
            phase = np.exp(-0.5j * prods @ zz)
            psi = psi * phase.reshape((b,) + (2,) * n)
    return psi.reshape(b, -1)
