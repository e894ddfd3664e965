"""Liouville-space (vectorized density matrix) linear algebra.

Density matrices are vectorized by column stacking::

    vec(A @ X @ B) == kron(B.T, A) @ vec(X)

so the superoperator of a unitary channel ``rho -> U rho U^dag`` is
``kron(conj(U), U)`` and a Lindblad generator with Hamiltonian ``H`` and jump
operators ``L_k`` (rates ``xi_k``) is::

    L = -1j * (kron(I, H) - kron(H.T, I))
        + sum_k xi_k * ( kron(conj(L_k), L_k)
                         - 0.5 * kron(I, L_k^dag L_k)
                         - 0.5 * kron((L_k^dag L_k).T, I) )

Inner products use ``<A|rho> = Tr(A^dag rho) = vec(A)^dag vec(rho)``; for the
Hermitian observables used throughout this equals ``Tr(A rho)``.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from typing import Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "DensityVector",
    "SuperOperator",
    "Observable",
    "DimensionError",
    "SpectralFloorError",
    "AccuracyError",
    "vectorize",
    "devectorize",
    "unitary_superop",
    "lindbladian",
    "channel_exp",
    "inv_sqrt",
    "expectation",
    "operator_norm",
    "identity_superop",
]

#: Relative tolerance on hermiticity / trace checks of inputs.
_INPUT_TOL = 1e-10

#: Eigenvalue-magnitude floor below which the inverse square root is refused.
_SPECTRAL_FLOOR = 1e-6


class DimensionError(ValueError):
    """Raised when operator/state dimensions are inconsistent or not a power of 2."""


class SpectralFloorError(ValueError):
    """Raised when an eigenvalue magnitude falls below the inverse-sqrt floor.

    This signals noise too strong for the inverse-square-root channel to be
    meaningful (the echo superoperator is effectively singular).
    """


class AccuracyError(RuntimeError):
    """Raised when a numerical routine cannot meet its accuracy contract."""


@dataclasses.dataclass
class DensityVector:
    """A vectorized density matrix ``|rho>`` of a ``qubits``-qubit system.

    Attributes:
        data: complex vector of length ``4**qubits`` (column stacking).
        qubits: number of qubits.
        trace: recorded trace of the corresponding density matrix.  Equals 1
            for physical states; post-selected branches may carry ``trace < 1``.
    """

    data: np.ndarray
    qubits: int
    trace: float = 1.0

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=complex).reshape(-1)
        dim = 2**self.qubits
        if self.data.shape[0] != dim * dim:
            raise DimensionError(
                f"state vector has length {self.data.shape[0]}, "
                f"expected {dim * dim} for {self.qubits} qubit(s)"
            )

    @property
    def dim(self) -> int:
        """Hilbert-space dimension ``2**qubits``."""
        return 2**self.qubits

    def matrix(self) -> np.ndarray:
        """The density matrix ``devectorize(data)``."""
        return devectorize(self.data)


@dataclasses.dataclass
class SuperOperator:
    """A dense Liouville-space operator acting on vectorized density matrices.

    Attributes:
        data: complex matrix of shape ``(4**qubits, 4**qubits)``.
        qubits: number of qubits.
        kind: origin tag: ``"unitary-channel"``, ``"noisy-channel"``,
            ``"generator"``, ``"composite"`` or ``"projector"``.
        note: optional free-form annotation (e.g. a warning carried by a
            baseline construction).
    """

    data: np.ndarray
    qubits: int
    kind: str = "composite"
    note: str | None = None

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=complex)
        dim = 4**self.qubits
        if self.data.shape != (dim, dim):
            raise DimensionError(
                f"superoperator has shape {self.data.shape}, "
                f"expected {(dim, dim)} for {self.qubits} qubit(s)"
            )

    @property
    def dim(self) -> int:
        """Liouville-space dimension ``4**qubits``."""
        return 4**self.qubits

    def __matmul__(self, other: "SuperOperator | DensityVector"):
        if isinstance(other, SuperOperator):
            if other.qubits != self.qubits:
                raise DimensionError("cannot compose superoperators of different sizes")
            return SuperOperator(self.data @ other.data, self.qubits, kind="composite")
        if isinstance(other, DensityVector):
            if other.qubits != self.qubits:
                raise DimensionError("superoperator/state size mismatch")
            return DensityVector(self.data @ other.data, other.qubits, trace=other.trace)
        return NotImplemented

    def apply(self, state: DensityVector) -> DensityVector:
        """Apply to a state, updating the recorded trace from the result."""
        out = self @ state
        out.trace = float(np.real(np.trace(out.matrix())))
        return out


@dataclasses.dataclass
class Observable:
    """A Hermitian observable ``A`` paired with its dual vector ``vec(A)^dag``.

    Attributes:
        matrix: Hermitian matrix of shape ``(2**qubits, 2**qubits)``.
        qubits: number of qubits.
        label: human-readable tag used in result records.
    """

    matrix: np.ndarray
    qubits: int
    label: str = ""

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=complex)
        dim = 2**self.qubits
        if self.matrix.shape != (dim, dim):
            raise DimensionError(
                f"observable has shape {self.matrix.shape}, expected {(dim, dim)}"
            )
        herm = operator_norm_bound(self.matrix - self.matrix.conj().T)
        scale = max(1.0, operator_norm_bound(self.matrix))
        if herm > _INPUT_TOL * scale:
            raise ValueError("observable must be Hermitian")

    @property
    def dual(self) -> np.ndarray:
        """``vec(A)^dag`` as a row vector."""
        return vectorize(self.matrix).conj()


def _require_square(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionError(f"{name} must be a square matrix, got shape {mat.shape}")
    return mat


def _qubits_for_dim(dim: int) -> int:
    n = int(round(math.log2(dim)))
    if 2**n != dim:
        raise DimensionError(f"dimension {dim} is not a power of 2")
    return n


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a Liouville vector.

    ``vectorize(rho)[i + dim*j] == rho[i, j]`` (columns concatenated top to
    bottom), so ``vec(A X B) = kron(B.T, A) vec(X)``.
    """
    rho = _require_square(rho, "rho")
    return rho.reshape(-1, order="F").copy()


def devectorize(vec: np.ndarray) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    vec = np.asarray(vec, dtype=complex).reshape(-1)
    dim = int(round(math.sqrt(vec.shape[0])))
    if dim * dim != vec.shape[0]:
        raise DimensionError(f"vector length {vec.shape[0]} is not a perfect square")
    return vec.reshape(dim, dim, order="F").copy()


def identity_superop(qubits: int) -> SuperOperator:
    """The identity channel on ``qubits`` qubits."""
    return SuperOperator(np.eye(4**qubits, dtype=complex), qubits, kind="unitary-channel")


def unitary_superop(u: np.ndarray) -> SuperOperator:
    """Superoperator ``kron(conj(U), U)`` of the channel ``rho -> U rho U^dag``.

    Raises:
        ValueError: if ``U`` deviates from unitarity by more than 1e-10 in
            operator norm.
    """
    u = _require_square(u, "U")
    dim = u.shape[0]
    qubits = _qubits_for_dim(dim)
    defect = operator_norm_bound(u.conj().T @ u - np.eye(dim))
    if defect > 1e-10:
        raise ValueError(f"matrix is not unitary (||U^dag U - I|| = {defect:.3e})")
    return SuperOperator(np.kron(u.conj(), u), qubits, kind="unitary-channel")


def lindbladian(
    hamiltonian: np.ndarray | None,
    jumps: Sequence[tuple[np.ndarray, float]] = (),
    *,
    qubits: int | None = None,
) -> SuperOperator:
    """Assemble the Lindblad generator for ``drho/dt = -i[H,rho] + sum_k xi_k D[L_k]rho``.

    Args:
        hamiltonian: Hermitian drive ``H`` (may be ``None`` for pure noise).
        jumps: sequence of ``(L_k, xi_k)`` jump operators with nonnegative rates.
        qubits: required if ``hamiltonian`` is ``None`` and ``jumps`` is empty.

    Returns:
        A ``SuperOperator`` with ``kind="generator"``.  The generator preserves
        trace: ``vec(I)^dag @ L == 0``.
    """
    dim: int | None = None
    if hamiltonian is not None:
        hamiltonian = _require_square(hamiltonian, "H")
        herm = operator_norm_bound(hamiltonian - hamiltonian.conj().T)
        if herm > _INPUT_TOL * max(1.0, operator_norm_bound(hamiltonian)):
            raise ValueError("Hamiltonian must be Hermitian")
        dim = hamiltonian.shape[0]
    for op, rate in jumps:
        op = _require_square(op, "jump operator")
        if dim is None:
            dim = op.shape[0]
        elif op.shape[0] != dim:
            raise DimensionError("jump operator dimension mismatch")
        if rate < 0:
            raise ValueError(f"jump rate must be nonnegative, got {rate}")
    if dim is None:
        if qubits is None:
            raise ValueError("empty generator needs an explicit qubit count")
        dim = 2**qubits
    n = _qubits_for_dim(dim)
    eye = np.eye(dim, dtype=complex)
    gen = np.zeros((dim * dim, dim * dim), dtype=complex)
    if hamiltonian is not None:
        gen += -1j * (np.kron(eye, hamiltonian) - np.kron(hamiltonian.T, eye))
    for op, rate in jumps:
        op = np.asarray(op, dtype=complex)
        ldl = op.conj().T @ op
        gen += rate * (
            np.kron(op.conj(), op)
            - 0.5 * np.kron(eye, ldl)
            - 0.5 * np.kron(ldl.T, eye)
        )
    return SuperOperator(gen, n, kind="generator")


def channel_exp(generator: SuperOperator, t: float) -> SuperOperator:
    """Dense matrix exponential ``exp(t * L)`` of a generator.

    Uses scaling-and-squaring with Pade approximation.  The result is checked
    for trace preservation (``vec(I)^dag exp(tL) == vec(I)^dag`` to 1e-9).

    Returns:
        ``SuperOperator`` tagged ``"unitary-channel"`` when the generator has a
        purely coherent (anti-Hermitian-conjugation) action, else
        ``"noisy-channel"``.
    """
    if generator.kind not in ("generator", "composite"):
        raise ValueError(f"channel_exp expects a generator, got kind={generator.kind!r}")
    mat = scipy.linalg.expm(generator.data * t)
    dim = 2**generator.qubits
    left_id = vectorize(np.eye(dim)).conj()
    drift = np.max(np.abs(left_id @ mat - left_id))
    if drift > 1e-9:
        raise AccuracyError(
            f"channel exponential violates trace preservation by {drift:.3e}"
        )
    # A generator conjugated from a Hamiltonian alone yields a unitary channel;
    # detect it by checking the matrix is unitary.
    defect = operator_norm_bound(mat.conj().T @ mat - np.eye(mat.shape[0]))
    kind = "unitary-channel" if defect < 1e-9 else "noisy-channel"
    return SuperOperator(mat, generator.qubits, kind=kind)


def operator_norm(superop: SuperOperator | np.ndarray) -> float:
    """Spectral norm (largest singular value)."""
    mat = superop.data if isinstance(superop, SuperOperator) else np.asarray(superop)
    return float(np.linalg.norm(mat, 2))


def operator_norm_bound(mat: np.ndarray) -> float:
    """Cheap upper bound ``sqrt(||M||_1 ||M||_inf)`` on the spectral norm.

    Used for validation checks where an exact SVD would dominate the cost.
    """
    mat = np.asarray(mat)
    if mat.size == 0:
        return 0.0
    n1 = np.max(np.sum(np.abs(mat), axis=0))
    ninf = np.max(np.sum(np.abs(mat), axis=1))
    return float(np.sqrt(n1 * ninf))


def inv_sqrt(superop: SuperOperator, *, floor: float = _SPECTRAL_FLOOR) -> SuperOperator:
    """Principal inverse square root ``S^(-1/2)`` of a superoperator.

    Diagonalizes ``S``, takes the principal branch ``lambda^(-1/2)`` per
    eigenvalue and recombines.  If the eigenvector basis is too ill-conditioned
    to meet the residual contract, falls back to a Schur-based square root.

    Args:
        superop: the operator to invert (typically an echo ``K_I K``).
        floor: refuse eigenvalues with ``|lambda| < floor``.

    Raises:
        SpectralFloorError: if any eigenvalue magnitude is below ``floor``
            (noise too strong for a meaningful inverse square root).
        AccuracyError: if the residual ``||inv_sqrt(S)^2 S - I||_max`` exceeds
            1e-6 on both routes.
    """
    mat = superop.data
    dim = mat.shape[0]
    eye = np.eye(dim)

    def residual(r: np.ndarray) -> float:
        return float(np.max(np.abs(r @ r @ mat - eye)))

    vals, vecs = np.linalg.eig(mat)
    if np.min(np.abs(vals)) < floor:
        raise SpectralFloorError(
            f"eigenvalue magnitude {np.min(np.abs(vals)):.3e} below floor {floor:.1e}; "
            "noise too strong for an inverse-square-root asymptote"
        )
    with np.errstate(all="raise"):
        inv_roots = np.power(vals.astype(complex), -0.5)
    try:
        result = vecs @ (inv_roots[:, None] * np.linalg.inv(vecs))
        if residual(result) <= 1e-8:
            return SuperOperator(result, superop.qubits, kind="composite")
    except np.linalg.LinAlgError:
        pass
    # Schur fallback for defective / ill-conditioned eigenvector bases.
    root = scipy.linalg.sqrtm(mat)
    result = np.linalg.inv(root)
    res = residual(result)
    if res > 1e-6:
        raise AccuracyError(
            f"inverse square root residual {res:.3e} exceeds 1e-6 (Schur fallback)"
        )
    return SuperOperator(result, superop.qubits, kind="composite")


def expectation(
    observable: Observable,
    state: DensityVector,
    *,
    imag_tol: float = 1e-6,
) -> float:
    """``Re <A|rho>`` with ``<A|rho> = Tr(A^dag rho)``.

    The imaginary part is a numerical-noise diagnostic: a value above
    ``imag_tol`` raises, values above 1e-9 are reported via a warning.
    """
    if observable.qubits != state.qubits:
        raise DimensionError("observable/state size mismatch")
    value = complex(observable.dual @ state.data)
    if abs(value.imag) >= imag_tol:
        raise AccuracyError(
            f"expectation value has imaginary part {value.imag:.3e} >= {imag_tol:.1e}"
        )
    if abs(value.imag) > 1e-9:
        warnings.warn(
            f"expectation value carries imaginary part {value.imag:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    return float(value.real)


def state_from_density(rho: np.ndarray) -> DensityVector:
    """Build a :class:`DensityVector` from a density matrix, validating it."""
    rho = _require_square(rho, "rho")
    qubits = _qubits_for_dim(rho.shape[0])
    tr = complex(np.trace(rho))
    if abs(tr.imag) > _INPUT_TOL:
        raise ValueError("density matrix trace must be real")
    herm = operator_norm_bound(rho - rho.conj().T)
    if herm > _INPUT_TOL * max(1.0, abs(tr)):
        raise ValueError("density matrix must be Hermitian")
    return DensityVector(vectorize(rho), qubits, trace=float(tr.real))
