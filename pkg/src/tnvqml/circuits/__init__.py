"""VQML circuit descriptions, gate kernels, MPO builders and dense oracles."""

from .builders import (
    PAULI_BASIS,
    build_rho,
    build_trainable_mpo,
    dense_observable,
    dense_rho,
    evolve_observable,
    evolve_pauli_operator,
    pauli_cores_to_mpo,
)
from .dense import SizeLimitError, encoding_states, statevector_model_eval
from .encoding import EncodingMap
from .gates import (
    CNOT,
    H,
    ChannelSpec,
    apply_kraus,
    depolarizing_kraus,
    depolarizing_ptm,
    pauli_string,
    ptm,
    rz,
    single_qubit_unitary,
    superoperator,
    unitary_ptm,
)
from .spec import SPEC_VERSION, CircuitSpec

__all__ = [
    "CNOT",
    "H",
    "PAULI_BASIS",
    "SPEC_VERSION",
    "ChannelSpec",
    "CircuitSpec",
    "EncodingMap",
    "SizeLimitError",
    "apply_kraus",
    "build_rho",
    "build_trainable_mpo",
    "dense_observable",
    "dense_rho",
    "depolarizing_kraus",
    "depolarizing_ptm",
    "encoding_states",
    "evolve_observable",
    "evolve_pauli_operator",
    "pauli_cores_to_mpo",
    "pauli_string",
    "ptm",
    "rz",
    "single_qubit_unitary",
    "statevector_model_eval",
    "superoperator",
    "unitary_ptm",
]
