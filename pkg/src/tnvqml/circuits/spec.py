"""Description of a VQML model and its per-block gate lists."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .encoding import EncodingMap
from .gates import H, single_qubit_unitary

SPEC_VERSION = 1

# A gate-list entry is one of
#   ("u", q, U)          single-qubit unitary U on qubit q
#   ("cx", c, t)         CNOT with control c and target t
#   ("dep", a, b, g)     two-qubit depolarizing channel of rate g on qubits (a, b)
# Qubits are 0-based from the top wire; qubit 0 is the most significant axis.


@dataclass(frozen=True, eq=False)
class CircuitSpec:
    """A VQML model: trainable blocks interleaved with Pauli-Z encoding layers.

    ``layers[b]`` is the number of hardware-efficient layers in trainable
    block ``b``. Two blocks give the simple parallel model ``W2 S W1``; ``R + 1``
    blocks give a re-uploading model with ``R`` encoding layers, so the
    compiled encoding-gate count is ``N = R * n_q``.

    Args:
        n_q: Number of qubits.
        layers: Per-block layer counts.
        theta: Flat parameters ordered block, layer, qubit, then
            ``(theta1, theta2, theta3)``.
        encoding: Encoding map with ``N`` angles.
        observable: Pauli string of length ``n_q`` (first letter on the top wire).
        gamma: Depolarizing rate applied after every CNOT.
        seed: Seed the parameters were drawn with, if any.
        reversed_cnot: Use the descending CNOT staircase.
        hadamard_blocks: Blocks that start with a fixed Hadamard on every qubit.
    """

    n_q: int
    layers: tuple[int, ...]
    theta: np.ndarray
    encoding: EncodingMap
    observable: str = ""
    gamma: float = 0.0
    seed: int | None = None
    reversed_cnot: bool = False
    hadamard_blocks: tuple[int, ...] = field(default=())

    def __post_init__(self):
        layers = tuple(int(v) for v in self.layers)
        theta = np.array(self.theta, dtype=float).reshape(-1)
        theta.setflags(write=False)
        obs = self.observable or "I" * (self.n_q - 1) + "Z"
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "observable", obs)
        object.__setattr__(self, "hadamard_blocks", tuple(int(b) for b in self.hadamard_blocks))
        if self.n_q < 1:
            raise ValueError("n_q must be positive")
        if len(layers) < 2 or min(layers) < 0:
            raise ValueError("need at least two trainable blocks with non-negative layer counts")
        if theta.size != self.n_params:
            raise ValueError(f"theta has {theta.size} entries, expected {self.n_params}")
        if len(obs) != self.n_q or set(obs) - set("IXYZ"):
            raise ValueError(f"observable {obs!r} is not a Pauli string on {self.n_q} qubits")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.encoding.n != self.n_encoding:
            raise ValueError(f"encoding has {self.encoding.n} angles, the circuit needs {self.n_encoding}")
        if any(not 0 <= b < len(layers) for b in self.hadamard_blocks):
            raise ValueError("hadamard block index out of range")

    # shape ----------------------------------------------------------------
    @property
    def n_reuploads(self) -> int:
        return len(self.layers) - 1

    @property
    def structure(self) -> str:
        return "parallel" if self.n_reuploads == 1 else "reuploading"

    @property
    def n_encoding(self) -> int:
        return self.n_reuploads * self.n_q

    @property
    def n_params(self) -> int:
        return 3 * self.n_q * sum(self.layers)

    def block_theta(self, block: int) -> np.ndarray:
        """Parameters of one block, shape ``(layers[block], n_q, 3)``."""
        start = 3 * self.n_q * sum(self.layers[:block])
        size = 3 * self.n_q * self.layers[block]
        return self.theta[start : start + size].reshape(self.layers[block], self.n_q, 3)

    def block_ops(self, block: int, noisy: bool = True) -> list[tuple]:
        """Time-ordered gate list of trainable block ``block``."""
        ops: list[tuple] = []
        if block in self.hadamard_blocks:
            ops.extend(("u", q, H) for q in range(self.n_q))
        pairs = [(i, i + 1) for i in range(self.n_q - 1)]
        if self.reversed_cnot:
            pairs.reverse()
        for layer in self.block_theta(block):
            ops.extend(("u", q, single_qubit_unitary(*layer[q])) for q in range(self.n_q))
            for c, t in pairs:
                ops.append(("cx", c, t))
                if noisy and self.gamma > 0:
                    ops.append(("dep", c, t, self.gamma))
        return ops

    def with_theta(self, theta) -> "CircuitSpec":
        d = self.to_dict()
        d["theta"] = list(np.asarray(theta, dtype=float).reshape(-1))
        return CircuitSpec.from_dict(d)

    # construction ---------------------------------------------------------
    @classmethod
    def random(
        cls,
        n_q: int,
        layers,
        seed: int = 0,
        encoding: EncodingMap | None = None,
        gamma: float = 0.0,
        observable: str = "",
        reversed_cnot: bool = False,
    ) -> "CircuitSpec":
        """Parameters drawn uniformly from ``[0, 2 pi)`` with ``numpy.random.default_rng(seed)``.

        An integer ``layers`` means ``L1 = L2 = layers`` (simple parallel model).
        """
        if np.isscalar(layers):
            layers = (int(layers), int(layers))
        layers = tuple(layers)
        n_params = 3 * n_q * sum(layers)
        theta = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, n_params)
        if encoding is None:
            encoding = EncodingMap.naive((len(layers) - 1) * n_q)
        return cls(n_q, layers, theta, encoding, observable, gamma, seed, reversed_cnot)

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return {
            "spec_version": SPEC_VERSION,
            "structure": self.structure,
            "n_q": self.n_q,
            "N": self.n_encoding,
            "layers": list(self.layers),
            "theta": [float(v) for v in self.theta],
            "observable": self.observable,
            "gamma": float(self.gamma),
            "encoding": self.encoding.to_dict(),
            "seed": self.seed,
            "reversed_cnot": self.reversed_cnot,
            "hadamard_blocks": list(self.hadamard_blocks),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CircuitSpec":
        version = d.get("spec_version")
        if version != SPEC_VERSION:
            raise ValueError(f"unsupported spec_version {version!r}")
        spec = cls(
            n_q=int(d["n_q"]),
            layers=tuple(d["layers"]),
            theta=np.asarray(d["theta"], dtype=float),
            encoding=EncodingMap.from_dict(d["encoding"]),
            observable=d.get("observable", ""),
            gamma=float(d.get("gamma", 0.0)),
            seed=d.get("seed"),
            reversed_cnot=bool(d.get("reversed_cnot", False)),
            hadamard_blocks=tuple(d.get("hadamard_blocks", ())),
        )
        if "structure" in d and d["structure"] != spec.structure:
            raise ValueError(f"structure {d['structure']!r} does not match {len(spec.layers)} blocks")
        if "N" in d and int(d["N"]) != spec.n_encoding:
            raise ValueError("N does not match n_q and the block count")
        return spec

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CircuitSpec":
        return cls.from_dict(json.loads(text))
