"""Mitigated-expectation engine built on amplified-circuit programs.

The noisy circuit channel ``K`` factors as ideal unitary times noise.  Playing
the pulse inverse after the circuit yields the echo ``K_I K`` which contains
noise only (to leading order), so the weighted family
``sum_j a_j K (K_I K)^j`` cancels the noise order by order — the weights are
the truncated expansion of ``(K_I K)^(-1/2)``.  Amplification can act on the
whole circuit (``"gkik"``), on each layer separately (``"lkik"``, the only
variant compatible with mid-circuit measurement and feedforward), by verbatim
circuit repetition (``"gate-insertion"``, a baseline that fails for
non-commuting noise), or with per-layer multivariate amplification vectors
(``"mve"``).

The infinite-order limit is computed exactly as an operator:
``K (K_I K)^(-1/2)`` globally, or the ordered product of per-layer limits.
Both equal the ideal circuit up to the second-order average-Hamiltonian
(Magnus) correction of the noise generator; :mod:`lkik.magnus` quantifies that
residual bias.

Post-selected observables are mitigated as a ratio of two independently
mitigated quantities (kept-branch numerator over kept-branch probability),
since the mitigation identity applies to linear functionals of the state.
"""

from __future__ import annotations

import dataclasses
from typing import Any

import numpy as np

from .circuits import (
    DynamicCircuit,
    LayerSpec,
    MeasurementEvent,
    StructuralError,
    build_program,
    circuit_superop,
    has_measurements,
    inverse_circuit,
    segment_superop,
)
from .coefficients import (
    CoefficientSet,
    adaptive_coefficients,
    mve_program_coefficients,
    taylor_coefficients,
)
from .liouville import (
    DensityVector,
    Observable,
    SuperOperator,
    expectation,
    identity_superop,
    inv_sqrt,
    operator_norm,
)

__all__ = [
    "IncompatibleSchemeError",
    "MitigationResult",
    "PostSelectedResult",
    "SCHEMES",
    "mitigate",
    "mitigate_postselected",
    "echo_survival",
    "gkik_asymptote",
    "lkik_asymptote",
    "asymptote_distance",
    "ideal_channel",
    "simulate_ideal",
]

SCHEMES = ("gkik", "lkik", "gate-insertion", "mve")


class IncompatibleSchemeError(ValueError):
    """Scheme cannot be realized on this circuit (e.g. global amplification
    or echo calibration on a circuit with mid-circuit measurement)."""


@dataclasses.dataclass
class MitigationResult:
    """Outcome of one mitigated estimation.

    Attributes:
        scheme: amplification scheme used.
        order: extrapolation order ``M``.
        qubits / layers: circuit shape.
        weights: combination weights, aligned with ``raw_values``.
        amplifications: per-entry amplification vectors (odd factors).
        raw_values: unmitigated expectation of each amplified circuit;
            ``raw_values[0]`` is the plain noisy value.
        mitigated: the weighted combination.
        ideal: noiseless reference expectation.
        delta: ``mitigated - ideal``.
        mu: echo survival used for adaptive calibration (``None`` otherwise).
        g: adaptive fit-window edge (``None`` unless adaptive weights).
        gamma: sampling-overhead factor ``sum |weights|``.
        weight_sum: recorded weight sum (1 for Taylor/MVE).
        note: diagnostics (e.g. non-self-inverse gate-insertion layers).
    """

    scheme: str
    order: int
    qubits: int
    layers: int
    weights: list[float]
    amplifications: list[tuple[int, ...]]
    raw_values: list[float]
    mitigated: float
    ideal: float
    delta: float
    mu: float | None = None
    g: float | None = None
    gamma: float = 1.0
    weight_sum: float = 1.0
    note: str | None = None

    @property
    def noisy(self) -> float:
        return self.raw_values[0]

    def as_dict(self) -> dict[str, Any]:
        """JSON-serializable record."""
        return {
            "scheme": self.scheme,
            "order": self.order,
            "qubits": self.qubits,
            "layers": self.layers,
            "weights": list(self.weights),
            "amplifications": [list(a) for a in self.amplifications],
            "raw_values": list(self.raw_values),
            "noisy": self.noisy,
            "mitigated": self.mitigated,
            "ideal": self.ideal,
            "delta": self.delta,
            "mu": self.mu,
            "g": self.g,
            "gamma": self.gamma,
            "weight_sum": self.weight_sum,
            "note": self.note,
        }


@dataclasses.dataclass
class PostSelectedResult:
    """Mitigated post-selected expectation: numerator over kept probability."""

    numerator: MitigationResult
    denominator: MitigationResult
    ratio: float
    ideal_ratio: float
    delta: float

    def as_dict(self) -> dict[str, Any]:
        return {
            "numerator": self.numerator.as_dict(),
            "denominator": self.denominator.as_dict(),
            "ratio": self.ratio,
            "ideal_ratio": self.ideal_ratio,
            "delta": self.delta,
        }


def echo_survival(circuit: DynamicCircuit) -> float:
    """Echo survival ``mu = <rho0| K_I K |rho0>`` of the whole circuit.

    ``K_I`` is the global pulse inverse, so ``mu`` is measurable on hardware by
    playing the circuit forward and inverted and projecting back onto the
    input.  Used to calibrate the adaptive fit window ``g = mu**2``.

    Raises:
        IncompatibleSchemeError: if the circuit measures mid-circuit (no global
            pulse inverse exists).
    """
    if has_measurements(circuit):
        raise IncompatibleSchemeError(
            "echo calibration needs a measurement-free circuit"
        )
    cache: dict = {}
    vec = circuit.initial_state.data.copy()
    for seg in circuit.segments:
        vec = segment_superop(seg, circuit.qubits, 0, _cache=cache).data @ vec
    for seg in inverse_circuit(circuit):
        vec = segment_superop(seg, circuit.qubits, 0, _cache=cache).data @ vec
    mu = circuit.initial_state.data.conj() @ vec
    if abs(mu.imag) > 1e-8:
        raise StructuralError(f"echo survival has imaginary part {mu.imag:.2e}")
    return float(mu.real)


def _resolve_coefficients(
    circuit: DynamicCircuit,
    scheme: str,
    order: int,
    family: str,
    g: float | None,
) -> tuple[CoefficientSet, float | None]:
    """Choose the weight set for a mitigation run.  Returns (set, mu)."""
    if scheme == "mve":
        return mve_program_coefficients(len(circuit.layers()), order), None
    if family == "taylor":
        return taylor_coefficients(order), None
    if family == "adaptive":
        mu = echo_survival(circuit)
        window = g if g is not None else float(np.clip(mu * mu, 1e-12, 1.0))
        return adaptive_coefficients(order, window), mu
    raise ValueError(f"unknown coefficient family {family!r}")


def mitigate(
    circuit: DynamicCircuit,
    order: int,
    *,
    scheme: str = "lkik",
    family: str = "taylor",
    g: float | None = None,
    coefficients: CoefficientSet | None = None,
) -> MitigationResult:
    """Run the full mitigation pipeline on one circuit.

    Args:
        circuit: the noisy (possibly dynamic) circuit.
        order: extrapolation order ``M`` (for ``scheme="mve"``: 1 or 2).
        scheme: ``"gkik"`` | ``"lkik"`` | ``"gate-insertion"`` | ``"mve"``.
        family: weight family for the single-variable schemes, ``"taylor"``
            (default) or ``"adaptive"`` (echo-calibrated window).
        g: optional explicit adaptive window edge, overriding ``mu**2``.
        coefficients: optional pre-built weight set (skips family resolution).

    Returns:
        A :class:`MitigationResult` with raw values, the combination, and the
        noiseless reference.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    mu: float | None = None
    if coefficients is None:
        coefficients, mu = _resolve_coefficients(circuit, scheme, order, family, g)
    program = build_program(circuit, scheme, coefficients)
    state = circuit.initial_state
    obs = circuit.observable
    raw = [expectation(obs, entry.apply(state)) for entry in program.entries]
    weights = [entry.weight for entry in program.entries]
    mitigated = float(np.dot(weights, raw))
    ideal_state = simulate_ideal(circuit)
    ideal = expectation(obs, ideal_state)
    notes = sorted(
        {f.note for entry in program.entries for f in entry.factors if f.note}
    )
    return MitigationResult(
        scheme=scheme,
        order=order,
        qubits=circuit.qubits,
        layers=len(circuit.layers()),
        weights=weights,
        amplifications=[entry.amplification for entry in program.entries],
        raw_values=raw,
        mitigated=mitigated,
        ideal=ideal,
        delta=mitigated - ideal,
        mu=mu,
        g=coefficients.g,
        gamma=coefficients.gamma,
        weight_sum=coefficients.weight_sum,
        note="; ".join(notes) or None,
    )


def simulate_ideal(circuit: DynamicCircuit) -> DensityVector:
    """Final state of the circuit with all noise off (measurements intact)."""
    cache: dict = {}
    vec = circuit.initial_state.data.copy()
    for seg in circuit.segments:
        vec = (
            segment_superop(seg, circuit.qubits, 0, noiseless=True, _cache=cache).data
            @ vec
        )
    return DensityVector(vec, circuit.qubits, trace=circuit.initial_state.trace)


def mitigate_postselected(
    circuit: DynamicCircuit,
    order: int,
    *,
    scheme: str = "lkik",
    family: str = "taylor",
    coefficients: CoefficientSet | None = None,
) -> PostSelectedResult:
    """Mitigate an observable conditioned on kept measurement outcomes.

    The post-selected expectation is ``Tr[O rho_kept] / Tr[rho_kept]``, a ratio
    of two linear functionals of the input state.  Each is mitigated
    independently with the same scheme and order — the numerator uses the
    circuit's observable, the denominator uses the identity (kept-outcome
    probability) — and the mitigated ratio is returned.

    Args:
        circuit: a dynamic circuit with at least one ``keep_outcome`` event.
    """
    kept = [
        seg
        for seg in circuit.segments
        if isinstance(seg, MeasurementEvent) and seg.keep_outcome is not None
    ]
    if not kept:
        raise StructuralError(
            "post-selected mitigation needs a measurement with keep_outcome set"
        )
    dim = 2**circuit.qubits
    denominator_circuit = DynamicCircuit(
        qubits=circuit.qubits,
        segments=circuit.segments,
        initial_state=circuit.initial_state,
        observable=Observable(np.eye(dim), circuit.qubits, label="identity"),
        duration=circuit.duration,
    )
    num = mitigate(circuit, order, scheme=scheme, family=family, coefficients=coefficients)
    den = mitigate(
        denominator_circuit, order, scheme=scheme, family=family, coefficients=coefficients
    )
    if abs(den.mitigated) < 1e-12:
        raise StructuralError("kept-outcome probability mitigated to ~0; ratio undefined")
    ratio = num.mitigated / den.mitigated
    ideal_ratio = num.ideal / den.ideal if abs(den.ideal) > 1e-12 else float("nan")
    return PostSelectedResult(
        numerator=num,
        denominator=den,
        ratio=ratio,
        ideal_ratio=ideal_ratio,
        delta=ratio - ideal_ratio,
    )


# ---------------------------------------------------------------------------
# Infinite-order limits
# ---------------------------------------------------------------------------


def ideal_channel(circuit: DynamicCircuit) -> SuperOperator:
    """Noiseless channel of a measurement-free circuit."""
    if has_measurements(circuit):
        raise IncompatibleSchemeError("ideal channel comparison needs a measurement-free circuit")
    return circuit_superop(circuit, 0, noiseless=True)


def gkik_asymptote(circuit: DynamicCircuit) -> SuperOperator:
    """Infinite-order global limit ``K (K_I K)^(-1/2)``.

    Exactly unitary-like up to the second-order average-Hamiltonian correction
    of the noise; equals the ideal channel when the noise generator commutes
    with itself across the circuit (e.g. a single layer with static noise in
    the interaction picture).
    """
    if has_measurements(circuit):
        raise IncompatibleSchemeError(
            "global amplification is incompatible with mid-circuit measurement"
        )
    cache: dict = {}
    k = identity_superop(circuit.qubits)
    for seg in circuit.segments:
        k = segment_superop(seg, circuit.qubits, 0, _cache=cache) @ k
    ki = identity_superop(circuit.qubits)
    for seg in inverse_circuit(circuit):
        ki = segment_superop(seg, circuit.qubits, 0, _cache=cache) @ ki
    echo = ki @ k
    return SuperOperator(
        k.data @ inv_sqrt(echo).data, circuit.qubits, kind="composite"
    )


def lkik_asymptote(circuit: DynamicCircuit) -> SuperOperator:
    """Infinite-order layered limit: ordered product of per-layer limits.

    Each layer contributes ``K_l (K_l_I K_l)^(-1/2)``; gates pass through
    unchanged.  Defined for measurement-free circuits (the layered *finite*
    orders also cover dynamic circuits, but the closed-form limit is an
    operator statement).
    """
    if has_measurements(circuit):
        raise IncompatibleSchemeError(
            "the closed-form layered limit is defined for measurement-free circuits"
        )
    from .circuits import pulse_inverse

    cache: dict = {}
    out = identity_superop(circuit.qubits)
    for seg in circuit.segments:
        if isinstance(seg, LayerSpec):
            k = segment_superop(seg, circuit.qubits, 0, _cache=cache)
            ki = segment_superop(pulse_inverse(seg), circuit.qubits, 0, _cache=cache)
            echo = ki @ k
            factor = SuperOperator(
                k.data @ inv_sqrt(echo).data, circuit.qubits, kind="composite"
            )
        else:
            factor = segment_superop(seg, circuit.qubits, 0, _cache=cache)
        out = factor @ out
    return out


def asymptote_distance(circuit: DynamicCircuit, scheme: str = "gkik") -> float:
    """Spectral-norm distance between the infinite-order limit and the ideal
    channel — the irreducible mitigation bias of the scheme on this circuit."""
    if scheme == "gkik":
        asym = gkik_asymptote(circuit)
    elif scheme == "lkik":
        asym = lkik_asymptote(circuit)
    else:
        raise ValueError(f"no closed-form limit for scheme {scheme!r}")
    return operator_norm(asym.data - ideal_channel(circuit).data)
