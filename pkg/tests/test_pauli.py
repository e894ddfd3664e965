"""Pauli-string operator builders."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lkik import pauli
from lkik.pauli import PauliStringError

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)
_SINGLE = {"I": I2, "X": X, "Y": Y, "Z": Z}


def _kron_chain(string: str) -> np.ndarray:
    out = np.array([[1.0]], dtype=complex)
    for ch in string:
        out = np.kron(out, _SINGLE[ch])
    return out


class TestOperator:
    def test_two_qubit_xx(self):
        assert np.array_equal(pauli.operator("XX"), np.kron(X, X))

    def test_leftmost_character_is_qubit_zero(self):
        # "ZI" acts with Z on qubit 0: |10...> picks up the -1 of qubit 0.
        op = pauli.operator("ZI")
        ket10 = np.zeros(4)
        ket10[0b10] = 1.0
        assert np.allclose(op @ ket10, -ket10)

    @given(st.text(alphabet="IXYZ", min_size=1, max_size=4))
    def test_matches_explicit_kron(self, string):
        assert np.array_equal(pauli.operator(string), _kron_chain(string))

    @given(st.text(alphabet="IXYZ", min_size=1, max_size=3))
    def test_hermitian_and_unitary(self, string):
        op = pauli.operator(string)
        assert np.array_equal(op, op.conj().T)
        assert np.allclose(op @ op, np.eye(op.shape[0]))

    def test_rejects_bad_character(self):
        with pytest.raises(PauliStringError):
            pauli.operator("XQ")

    def test_rejects_empty(self):
        with pytest.raises(PauliStringError):
            pauli.operator("")


class TestHamiltonian:
    def test_weighted_sum(self):
        h = pauli.hamiltonian([("XX", 0.5), ("ZI", -1.0)], 2)
        assert np.allclose(h, 0.5 * np.kron(X, X) - np.kron(Z, I2))

    def test_length_mismatch(self):
        with pytest.raises(PauliStringError):
            pauli.hamiltonian([("X", 1.0)], 2)


class TestJumpOperator:
    def test_sigma_minus_lowers(self):
        # sigma- |1> = |0> in the 0/1 basis used for bitstrings.
        op = pauli.jump_operator("sigma-", 0, 1)
        ket1 = np.array([0.0, 1.0])
        ket0 = np.array([1.0, 0.0])
        assert np.allclose(op @ ket1, ket0)
        assert np.allclose(op @ ket0, 0.0)

    def test_embedding_position(self):
        op = pauli.jump_operator("Z", 1, 2)
        assert np.array_equal(op, np.kron(I2, Z))

    def test_sigma_plus_is_adjoint_of_minus(self):
        lower = pauli.jump_operator("sigma-", 0, 2)
        raise_ = pauli.jump_operator("sigma+", 0, 2)
        assert np.array_equal(raise_, lower.conj().T)

    def test_unknown_name(self):
        with pytest.raises(PauliStringError):
            pauli.jump_operator("sigma*", 0, 1)

    def test_qubit_out_of_range(self):
        with pytest.raises(PauliStringError):
            pauli.jump_operator("Z", 2, 2)


class TestStatesAndGates:
    def test_basis_state_is_projector_onto_bits(self):
        rho = pauli.basis_state("01")
        ket = np.zeros(4)
        ket[0b01] = 1.0
        assert np.allclose(rho, np.outer(ket, ket))

    def test_basis_projector_matches_state(self):
        assert np.array_equal(pauli.basis_projector("10"), pauli.basis_state("10"))

    def test_plus_state(self):
        rho = pauli.plus_state(1)
        assert np.allclose(rho, np.full((2, 2), 0.5))

    def test_gate_h_embedding(self):
        h1 = pauli.gate("H", 1, 2)
        had = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
        assert np.allclose(h1, np.kron(I2, had))

    def test_gate_unitarity(self):
        for name in ("I", "X", "Y", "Z", "H", "S"):
            g = pauli.gate(name, 0, 2)
            assert np.allclose(g @ g.conj().T, np.eye(4))

    def test_bad_bits(self):
        with pytest.raises(PauliStringError):
            pauli.basis_state("02")
