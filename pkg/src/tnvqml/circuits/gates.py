"""Gate matrices, the two-qubit depolarizing channel and its transfer matrices."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULIS = (I2, X, Y, Z)
PAULI_LETTERS = "IXYZ"
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)

for _m in (I2, X, Y, Z, H, CNOT):
    _m.setflags(write=False)


def single_qubit_unitary(t1: float, t2: float, t3: float) -> np.ndarray:
    """Three-parameter single-qubit unitary of the hardware-efficient ansatz."""
    c, s = np.cos(t1 / 2), np.sin(t1 / 2)
    return np.array(
        [[c, -np.exp(1j * t3) * s], [np.exp(1j * t2) * s, np.exp(1j * (t2 + t3)) * c]],
        dtype=complex,
    )


def rz(phi: float) -> np.ndarray:
    """Pauli-Z rotation ``exp(-i phi Z / 2)``."""
    return np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])


def pauli_string(letters: str) -> np.ndarray:
    """Dense matrix of a Pauli string; the first letter acts on the most significant qubit."""
    out = np.ones((1, 1), dtype=complex)
    for ch in letters:
        out = np.kron(out, PAULIS[PAULI_LETTERS.index(ch)])
    return out


def depolarizing_kraus(gamma: float) -> np.ndarray:
    """The 16 Kraus operators of the two-qubit depolarizing channel, shape ``(16, 4, 4)``.

    Index ``4 * p + q`` holds the operator proportional to ``P_p (x) P_q``.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    ks = np.empty((16, 4, 4), dtype=complex)
    for p, q in product(range(4), repeat=2):
        w = 1.0 - 15.0 * gamma / 16.0 if p == q == 0 else gamma / 16.0
        ks[4 * p + q] = np.sqrt(w) * np.kron(PAULIS[p], PAULIS[q])
    return ks


@dataclass(frozen=True)
class ChannelSpec:
    """Two-qubit depolarizing noise inserted after every two-qubit gate."""

    gamma: float
    placement: str = "after_every_two_qubit_gate"

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.placement != "after_every_two_qubit_gate":
            raise ValueError(f"unsupported noise placement {self.placement!r}")

    def kraus(self) -> np.ndarray:
        return depolarizing_kraus(self.gamma)

    def completeness_error(self) -> float:
        """Max-entry deviation of ``sum K^dag K`` from the identity."""
        ks = self.kraus()
        acc = np.einsum("kba,kbc->ac", ks.conj(), ks)
        return float(np.abs(acc - np.eye(4)).max())


def superoperator(kraus: np.ndarray) -> np.ndarray:
    """Row-major vectorized channel ``sum_k K (x) K*`` acting on ``vec(A)``."""
    return sum(np.kron(k, k.conj()) for k in kraus)


def apply_kraus(kraus: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Dense ``sum_k K A K^dag``."""
    return np.einsum("kab,bc,kdc->ad", kraus, a, kraus.conj())


@lru_cache(maxsize=4)
def _pauli_basis(n: int) -> np.ndarray:
    """Normalized Pauli basis ``P / sqrt(2)^n`` for ``n`` qubits, shape ``(4^n, 2^n, 2^n)``."""
    mats = [pauli_string("".join(s)) for s in product(PAULI_LETTERS, repeat=n)]
    out = np.array(mats) / np.sqrt(2.0) ** n
    out.setflags(write=False)
    return out


def ptm(kraus: np.ndarray) -> np.ndarray:
    """Pauli transfer matrix ``T_pq = Tr(B_p^dag E(B_q))`` in the normalized Pauli basis."""
    n = int(round(np.log2(kraus.shape[1])))
    basis = _pauli_basis(n)
    out = np.einsum("pba,kbc,qcd,kad->pq", basis.conj(), kraus, basis, kraus.conj())
    return out


def unitary_ptm(u: np.ndarray) -> np.ndarray:
    """Pauli transfer matrix of conjugation by ``u``; real for any unitary."""
    t = ptm(u[None])
    assert np.abs(t.imag).max() < 1e-10
    return t.real


def depolarizing_ptm(gamma: float) -> np.ndarray:
    """Diagonal PTM of the two-qubit depolarizing channel: ``1`` on ``II``, ``1 - gamma`` elsewhere."""
    d = np.full(16, 1.0 - gamma)
    d[0] = 1.0
    return np.diag(d)
