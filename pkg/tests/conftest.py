"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from lkik import pauli
from lkik.circuits import DynamicCircuit, LayerSpec
from lkik.liouville import Observable, state_from_density

# Verdict lines queued by the acceptance tests; flushed after the run so they
# are visible no matter which capture mode pytest runs under.
acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)


def small_layer(
    xi: float = 0.05,
    *,
    jump: str = "Z",
    duration: float = 1.0,
    angle: float = np.pi / 4,
) -> LayerSpec:
    """Two-qubit entangling layer (XX drive) with uniform single-qubit noise."""
    h = angle * pauli.operator("XX")
    jumps = [(pauli.jump_operator(jump, q, 2), xi) for q in range(2)]
    return LayerSpec(duration, [(duration, h)], jumps)


def small_circuit(
    xi: float = 0.05,
    *,
    jump: str = "Z",
    n_layers: int = 1,
    duration: float = 1.0,
) -> DynamicCircuit:
    """Two-qubit circuit of identical layers, measuring survival of |00>."""
    layers = [
        small_layer(xi, jump=jump, duration=duration / n_layers)
        for _ in range(n_layers)
    ]
    return DynamicCircuit(
        qubits=2,
        segments=layers,
        initial_state=state_from_density(pauli.basis_state("00")),
        observable=Observable(pauli.basis_projector("00"), 2, label="proj:00"),
    )


def random_density(qubits: int, rng: np.random.Generator) -> np.ndarray:
    """Random full-rank density matrix."""
    dim = 2**qubits
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-ish random unitary via QR."""
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))
