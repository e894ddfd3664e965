"""Pauli strings, standard jump operators, gates and computational-basis states.

Qubit 0 is the leftmost character of a Pauli string / bit string and the most
significant tensor factor: ``operator("XZ") == kron(X, Z)`` acts with X on
qubit 0 and Z on qubit 1.
"""

from __future__ import annotations

import functools
from typing import Iterable

import numpy as np

__all__ = [
    "PAULIS",
    "PauliStringError",
    "operator",
    "hamiltonian",
    "embed",
    "jump_operator",
    "gate",
    "basis_state",
    "basis_projector",
    "plus_state",
]

_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)

#: Single-qubit Pauli matrices by letter.
PAULIS: dict[str, np.ndarray] = {"I": _I, "X": _X, "Y": _Y, "Z": _Z}

#: Standard jump operators selectable by name in circuit files.
_JUMPS: dict[str, np.ndarray] = {
    "Z": _Z,  # pure dephasing
    "sigma-": np.array([[0, 1], [0, 0]], dtype=complex),  # amplitude damping
    "sigma+": np.array([[0, 0], [1, 0]], dtype=complex),  # excitation
    "X": _X,
    "Y": _Y,
}

_GATES: dict[str, np.ndarray] = {
    "I": _I,
    "X": _X,
    "Y": _Y,
    "Z": _Z,
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
}


class PauliStringError(ValueError):
    """Raised for malformed Pauli strings, with the offending position."""


def _validate(string: str, qubits: int | None = None) -> str:
    if not string:
        raise PauliStringError("empty Pauli string")
    for pos, ch in enumerate(string):
        if ch not in PAULIS:
            raise PauliStringError(
                f"invalid Pauli letter {ch!r} at position {pos} in {string!r}"
            )
    if qubits is not None and len(string) != qubits:
        raise PauliStringError(
            f"Pauli string {string!r} has length {len(string)}, expected {qubits}"
        )
    return string


@functools.lru_cache(maxsize=512)
def operator(string: str) -> np.ndarray:
    """Dense matrix of a Pauli string, e.g. ``operator("XXI")``."""
    _validate(string)
    out = PAULIS[string[0]]
    for ch in string[1:]:
        out = np.kron(out, PAULIS[ch])
    return out


def hamiltonian(terms: Iterable[tuple[str, float]], qubits: int) -> np.ndarray:
    """Sum of Pauli strings with real coefficients.

    Args:
        terms: iterable of ``(pauli_string, coefficient)`` pairs.
        qubits: expected string length (validated per term).
    """
    dim = 2**qubits
    out = np.zeros((dim, dim), dtype=complex)
    for string, coeff in terms:
        _validate(string, qubits)
        out += float(coeff) * operator(string)
    return out


def embed(single: np.ndarray, qubit: int, qubits: int) -> np.ndarray:
    """Embed a single-qubit operator at position ``qubit`` in a register."""
    if not 0 <= qubit < qubits:
        raise PauliStringError(f"qubit index {qubit} out of range for {qubits} qubits")
    factors = [single if q == qubit else _I for q in range(qubits)]
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def jump_operator(name: str, qubit: int, qubits: int) -> np.ndarray:
    """A named single-qubit jump operator embedded in the register.

    Known names: ``"Z"`` (dephasing), ``"sigma-"`` (amplitude damping),
    ``"sigma+"``, ``"X"``, ``"Y"``.
    """
    if name not in _JUMPS:
        raise PauliStringError(f"unknown jump operator {name!r}; known: {sorted(_JUMPS)}")
    return embed(_JUMPS[name], qubit, qubits)


def gate(name: str, qubit: int, qubits: int) -> np.ndarray:
    """A named single-qubit gate unitary embedded in the register."""
    if name not in _GATES:
        raise PauliStringError(f"unknown gate {name!r}; known: {sorted(_GATES)}")
    return embed(_GATES[name], qubit, qubits)


def basis_state(bits: str) -> np.ndarray:
    """Density matrix of the computational basis state ``|bits><bits|``."""
    index = 0
    for pos, b in enumerate(bits):
        if b not in "01":
            raise PauliStringError(f"invalid bit {b!r} at position {pos} in {bits!r}")
        index = (index << 1) | int(b)
    dim = 2 ** len(bits)
    rho = np.zeros((dim, dim), dtype=complex)
    rho[index, index] = 1.0
    return rho


def basis_projector(bits: str) -> np.ndarray:
    """Projector onto a computational basis state (alias of :func:`basis_state`)."""
    return basis_state(bits)


def plus_state(qubits: int = 1) -> np.ndarray:
    """Density matrix of ``|+>^qubits``."""
    dim = 2**qubits
    return np.full((dim, dim), 1.0 / dim, dtype=complex)
