"""Circuit model: noisy pulse layers, measurement/feedforward, amplification.

A :class:`DynamicCircuit` is an ordered list of segments:

* :class:`LayerSpec` — continuous evolution under a (piecewise-constant) drive
  Hamiltonian plus always-on dissipators,
* :class:`GateOp` — an instantaneous ideal unitary (used for feedforward
  corrections),
* :class:`MeasurementEvent` — a projective computational-basis measurement on a
  subset of qubits with a branch table mapping each outcome to conditioned
  segments; after the conditioned segments the main sequence continues.

Noise amplification replaces a layer ``K`` by ``K (K_I K)^j`` where ``K_I`` is
the *pulse inverse*: the layer played with its drive schedule time-reversed and
sign-flipped while the dissipators act unchanged.  The noiseless part retraces
itself, so the noise is traversed ``2j + 1`` times.  The gate-insertion
baseline ``K^(2j+1)`` (circuit repeated verbatim) is provided for comparison;
it amplifies noise correctly only when the noise commutes with the ideal
unitary, and is only applicable to self-inverse layers.

Measurement branch sums are evaluated by linear folding: at each event the
state becomes ``sum_k C_k M_k |rho>`` with ``C_k`` the conditioned-branch
channel, which is algebraically identical to enumerating all outcome
histories.  Post-selection keeps a single projector (``keep_outcome``) and may
carry trace < 1.
"""

from __future__ import annotations

import dataclasses
import json
import pathlib
import warnings
from typing import Any, Iterable, Union

import numpy as np
import scipy.linalg

from . import pauli
from .coefficients import CoefficientSet
from .liouville import (
    DensityVector,
    DimensionError,
    Observable,
    SuperOperator,
    channel_exp,
    identity_superop,
    lindbladian,
    operator_norm_bound,
    state_from_density,
    unitary_superop,
    vectorize,
)

__all__ = [
    "LayerSpec",
    "GateOp",
    "MeasurementEvent",
    "DynamicCircuit",
    "AmplifiedProgram",
    "ProgramEntry",
    "StructuralError",
    "GateInsertionWarning",
    "pulse_inverse",
    "inverse_circuit",
    "compile_layer",
    "ideal_unitary",
    "amplify_layer",
    "gate_insertion_amplify",
    "segment_superop",
    "circuit_superop",
    "simulate_dynamic",
    "build_program",
    "split_layer",
    "split_circuit",
    "has_measurements",
    "load_circuit",
    "circuit_to_dict",
    "validate_circuit_dict",
]

#: Hard cap on projective outcomes per measurement event.
MAX_BRANCHES = 2**12

#: Hard cap on register size for dense Liouville simulation.
MAX_QUBITS = 6


class StructuralError(ValueError):
    """Raised for malformed circuits (duration gaps, bad branch tables, ...)."""


class GateInsertionWarning(UserWarning):
    """Emitted when the gate-insertion baseline is built on a non-self-inverse layer."""


@dataclasses.dataclass
class LayerSpec:
    """One continuously-driven noisy layer.

    Attributes:
        duration: total layer duration (> 0).
        schedule: piecewise-constant drive as ``(sub_duration, H)`` pairs; the
            sub-durations must sum to ``duration``.  A single pair means a
            constant drive.
        jumps: dissipators as ``(operator, rate)`` pairs, active for the whole
            layer.  Rates are per-unit-time and are *not* rescaled when the
            layer is subdivided.
        label: used in diagnostics.
    """

    duration: float
    schedule: list[tuple[float, np.ndarray]]
    jumps: list[tuple[np.ndarray, float]] = dataclasses.field(default_factory=list)
    label: str = ""

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise StructuralError(f"layer duration must be > 0, got {self.duration}")
        if not self.schedule:
            raise StructuralError("layer needs at least one drive segment")
        total = sum(dt for dt, _ in self.schedule)
        if abs(total - self.duration) > 1e-9 * max(1.0, self.duration):
            raise StructuralError(
                f"drive segments sum to {total}, expected duration {self.duration}"
            )
        for dt, _ in self.schedule:
            if dt <= 0:
                raise StructuralError("drive sub-durations must be > 0")

    @property
    def qubits(self) -> int:
        dim = self.schedule[0][1].shape[0]
        return int(round(np.log2(dim)))

    def is_noiseless(self) -> bool:
        return all(rate == 0 for _, rate in self.jumps)

    def without_noise(self) -> "LayerSpec":
        return LayerSpec(self.duration, list(self.schedule), [], label=self.label)


@dataclasses.dataclass
class GateOp:
    """An instantaneous ideal unitary (e.g. a feedforward correction)."""

    unitary: np.ndarray
    label: str = ""

    @property
    def qubits(self) -> int:
        return int(round(np.log2(self.unitary.shape[0])))


Segment = Union[LayerSpec, GateOp, "MeasurementEvent"]


@dataclasses.dataclass
class MeasurementEvent:
    """Projective computational-basis measurement with feedforward branches.

    Attributes:
        qubits: measured qubit indices (projectors act on these, identity
            elsewhere).
        branches: outcome bitstring -> conditioned segments, applied before the
            main sequence continues.  Outcomes missing from the table get an
            empty insert.
        keep_outcome: if set, post-select on this outcome: only its projector
            (and branch) is applied and the state trace drops accordingly.
        label: used in diagnostics.
    """

    qubits: tuple[int, ...]
    branches: dict[str, list[Segment]] = dataclasses.field(default_factory=dict)
    keep_outcome: str | None = None
    label: str = ""

    def __post_init__(self) -> None:
        self.qubits = tuple(self.qubits)
        if not self.qubits:
            raise StructuralError("measurement event must name at least one qubit")
        n_out = 2 ** len(self.qubits)
        if n_out > MAX_BRANCHES:
            raise StructuralError(
                f"measurement on {len(self.qubits)} qubits exceeds the "
                f"{MAX_BRANCHES}-outcome cap"
            )
        for outcome in self.branches:
            self._check_outcome(outcome)
        if self.keep_outcome is not None:
            self._check_outcome(self.keep_outcome)

    def _check_outcome(self, outcome: str) -> None:
        if len(outcome) != len(self.qubits) or any(b not in "01" for b in outcome):
            raise StructuralError(
                f"outcome {outcome!r} is not a {len(self.qubits)}-bit string"
            )

    def outcomes(self) -> list[str]:
        n = len(self.qubits)
        return [format(k, f"0{n}b") for k in range(2**n)]


@dataclasses.dataclass
class DynamicCircuit:
    """A complete circuit: segments plus initial state and observable.

    Attributes:
        qubits: register size.
        segments: ordered segment list.
        initial_state: the input ``DensityVector``.
        observable: the measured observable.
        duration: declared total duration; validated against the sum of
            top-level layer durations.
    """

    qubits: int
    segments: list[Segment]
    initial_state: DensityVector
    observable: Observable
    duration: float | None = None

    def __post_init__(self) -> None:
        if self.qubits > MAX_QUBITS:
            raise DimensionError(
                f"{self.qubits} qubits exceeds the dense-simulation cap {MAX_QUBITS}"
            )
        for seg in self.segments:
            if isinstance(seg, MeasurementEvent):
                if max(seg.qubits) >= self.qubits:
                    raise StructuralError("measurement qubit index out of range")
            elif seg.qubits != self.qubits:
                raise DimensionError("segment register size mismatch")
        if self.initial_state.qubits != self.qubits:
            raise DimensionError("initial state register size mismatch")
        if self.observable.qubits != self.qubits:
            raise DimensionError("observable register size mismatch")
        total = self.layer_duration()
        if self.duration is None:
            self.duration = total
        elif abs(self.duration - total) > 1e-9 * max(1.0, total):
            raise StructuralError(
                f"declared duration {self.duration} != layer-duration sum {total}"
            )

    def layer_duration(self) -> float:
        """Sum of top-level layer durations (measurements are instantaneous)."""
        return float(
            sum(seg.duration for seg in self.segments if isinstance(seg, LayerSpec))
        )

    def layers(self) -> list[LayerSpec]:
        """Top-level layers in order."""
        return [seg for seg in self.segments if isinstance(seg, LayerSpec)]


@dataclasses.dataclass(frozen=True)
class ProgramEntry:
    """One weighted circuit in an amplified program.

    ``factors`` are in application order: the entry's channel is
    ``factors[-1] @ ... @ factors[0]``.
    """

    weight: float
    factors: tuple[SuperOperator, ...]
    amplification: tuple[int, ...]

    def matrix(self) -> np.ndarray:
        out = self.factors[0].data
        for f in self.factors[1:]:
            out = f.data @ out
        return out

    def apply(self, state: DensityVector) -> DensityVector:
        vec = state.data
        for f in self.factors:
            vec = f.data @ vec
        return DensityVector(vec, state.qubits, trace=state.trace)


@dataclasses.dataclass
class AmplifiedProgram:
    """A weighted family of amplified circuits realizing one mitigation scheme."""

    scheme: str
    entries: list[ProgramEntry]
    coefficients: CoefficientSet
    depths: list[float]

    def __post_init__(self) -> None:
        if self.coefficients.scheme in ("taylor", "mve"):
            s = sum(e.weight for e in self.entries)
            if abs(s - 1.0) > 1e-12:
                raise StructuralError(
                    f"{self.coefficients.scheme} program weights sum to {s}, not 1"
                )


# ---------------------------------------------------------------------------
# Layer compilation and amplification
# ---------------------------------------------------------------------------


def _fingerprint(segment: Segment) -> tuple:
    """Content-based cache key, so identical split sub-layers compile once."""
    if isinstance(segment, LayerSpec):
        return (
            "layer",
            segment.duration,
            tuple((dt, h.tobytes()) for dt, h in segment.schedule),
            tuple((op.tobytes(), rate) for op, rate in segment.jumps),
        )
    if isinstance(segment, GateOp):
        return ("gate", segment.unitary.tobytes())
    return ("event", id(segment))


def pulse_inverse(layer: LayerSpec) -> LayerSpec:
    """The layer with its drive time-reversed and negated, noise unchanged.

    Applying :func:`pulse_inverse` twice returns an equal layer; for a
    noiseless layer ``compile(pulse_inverse(layer)) @ compile(layer)`` is the
    identity channel.
    """
    schedule = [(dt, -h) for dt, h in reversed(layer.schedule)]
    return LayerSpec(layer.duration, schedule, list(layer.jumps), label=f"{layer.label}~I")


def compile_layer(layer: LayerSpec, *, noiseless: bool = False) -> SuperOperator:
    """Liouville-space channel of one layer (drive segments in time order)."""
    jumps = [] if noiseless else layer.jumps
    out: SuperOperator | None = None
    for dt, h in layer.schedule:
        step = channel_exp(lindbladian(h, jumps), dt)
        out = step if out is None else step @ out
    assert out is not None
    if not noiseless and jumps:
        out.kind = "noisy-channel"
    return out


def ideal_unitary(layer: LayerSpec) -> np.ndarray:
    """Hilbert-space unitary of the layer's drive alone."""
    dim = 2**layer.qubits
    u = np.eye(dim, dtype=complex)
    for dt, h in layer.schedule:
        u = scipy.linalg.expm(-1j * h * dt) @ u
    return u


def amplify_layer(layer: LayerSpec, level: int, *, _cache: dict | None = None) -> SuperOperator:
    """``K (K_I K)^level``: noise amplified by the odd factor ``2*level + 1``."""
    if level < 0:
        raise ValueError(f"amplification level must be >= 0, got {level}")
    key = (_fingerprint(layer), "kik", level)
    if _cache is not None and key in _cache:
        return _cache[key]
    forward = compile_layer(layer)
    if level == 0:
        result = forward
    else:
        echo = compile_layer(pulse_inverse(layer)) @ forward
        power = np.linalg.matrix_power(echo.data, level)
        result = SuperOperator(forward.data @ power, layer.qubits, kind="noisy-channel")
    if _cache is not None:
        _cache[key] = result
    return result


def gate_insertion_amplify(
    layer: LayerSpec, level: int, *, _cache: dict | None = None
) -> SuperOperator:
    """Baseline amplification ``K^(2*level+1)`` (layer repeated verbatim).

    Only meaningful for self-inverse layers (``U^2`` proportional to the
    identity); otherwise a :class:`GateInsertionWarning` is emitted and the
    result carries a ``note``.  Even for self-inverse layers this amplifies
    noise incorrectly when the noise does not commute with the drive.
    """
    if level < 0:
        raise ValueError(f"amplification level must be >= 0, got {level}")
    key = (_fingerprint(layer), "gi", level)
    if _cache is not None and key in _cache:
        return _cache[key]
    forward = compile_layer(layer)
    note = None
    u = ideal_unitary(layer)
    dim = u.shape[0]
    usq = u @ u
    # Self-inverse up to global phase: U^2 = e^{i phi} I.
    phase = np.trace(usq) / dim
    if abs(abs(phase) - 1.0) > 1e-8 or operator_norm_bound(usq - phase * np.eye(dim)) > 1e-8:
        note = "layer is not self-inverse; gate-insertion repetition does not retrace it"
        warnings.warn(note, GateInsertionWarning, stacklevel=2)
    mat = np.linalg.matrix_power(forward.data, 2 * level + 1)
    result = SuperOperator(mat, layer.qubits, kind="noisy-channel", note=note)
    if _cache is not None:
        _cache[key] = result
    return result


def _measurement_projectors(event: MeasurementEvent, qubits: int) -> dict[str, SuperOperator]:
    projs = {}
    for outcome in event.outcomes():
        p = np.ones((1, 1), dtype=complex)
        for q in range(qubits):
            if q in event.qubits:
                bit = outcome[event.qubits.index(q)]
                single = np.diag([1.0, 0.0]) if bit == "0" else np.diag([0.0, 1.0])
            else:
                single = np.eye(2)
            p = np.kron(p, single)
        projs[outcome] = SuperOperator(
            np.kron(p.conj(), p), qubits, kind="projector"
        )
    return projs


def segment_superop(
    segment: Segment,
    qubits: int,
    level: int,
    *,
    amplifier: str = "kik",
    noiseless: bool = False,
    _cache: dict | None = None,
) -> SuperOperator:
    """Channel of one segment at the given amplification level.

    Measurement events resolve to ``sum_k C_k M_k`` (or ``C_keep M_keep`` under
    post-selection) with conditioned branches amplified at the same level.
    Gates are never amplified; layers follow ``amplifier``
    (``"kik"`` | ``"gate-insertion"`` | ``"none"``).
    """
    if isinstance(segment, LayerSpec):
        if noiseless or segment.is_noiseless():
            key = (_fingerprint(segment), "ideal")
            if _cache is not None and key in _cache:
                return _cache[key]
            result = compile_layer(segment, noiseless=True)
            if _cache is not None:
                _cache[key] = result
            return result
        if amplifier == "kik":
            return amplify_layer(segment, level, _cache=_cache)
        if amplifier == "gate-insertion":
            return gate_insertion_amplify(segment, level, _cache=_cache)
        if amplifier == "none":
            key = (_fingerprint(segment), "kik", 0)
            if _cache is not None and key in _cache:
                return _cache[key]
            result = compile_layer(segment)
            if _cache is not None:
                _cache[key] = result
            return result
        raise ValueError(f"unknown amplifier {amplifier!r}")
    if isinstance(segment, GateOp):
        key = (_fingerprint(segment), "gate")
        if _cache is not None and key in _cache:
            return _cache[key]
        result = unitary_superop(segment.unitary)
        if _cache is not None:
            _cache[key] = result
        return result
    if isinstance(segment, MeasurementEvent):
        projs = _measurement_projectors(segment, qubits)
        dim = 4**qubits

        def branch_channel(outcome: str) -> np.ndarray:
            mat = projs[outcome].data
            for seg in segment.branches.get(outcome, []):
                mat = (
                    segment_superop(
                        seg, qubits, level,
                        amplifier=amplifier, noiseless=noiseless, _cache=_cache,
                    ).data
                    @ mat
                )
            return mat

        if segment.keep_outcome is not None:
            mat = branch_channel(segment.keep_outcome)
        else:
            mat = np.zeros((dim, dim), dtype=complex)
            for outcome in segment.outcomes():
                mat += branch_channel(outcome)
        return SuperOperator(mat, qubits, kind="composite")
    raise TypeError(f"unknown segment type {type(segment).__name__}")


def circuit_superop(
    circuit: DynamicCircuit,
    level: int = 0,
    *,
    amplifier: str = "kik",
    noiseless: bool = False,
) -> SuperOperator:
    """The full circuit channel at one amplification level."""
    cache: dict = {}
    out = identity_superop(circuit.qubits)
    for seg in circuit.segments:
        out = (
            segment_superop(
                seg, circuit.qubits, level,
                amplifier=amplifier, noiseless=noiseless, _cache=cache,
            )
            @ out
        )
    return out


def simulate_dynamic(
    circuit: DynamicCircuit,
    level: int = 0,
    *,
    amplifier: str = "kik",
    noiseless: bool = False,
) -> DensityVector:
    """Propagate the initial state through the amplified circuit.

    Returns the (sub-normalized, if post-selected) final state.  For circuits
    without post-selection the result trace is checked to ``1 +- 1e-10``.
    """
    cache: dict = {}
    state = circuit.initial_state
    vec = state.data.copy()
    post_selected = False
    for seg in circuit.segments:
        if isinstance(seg, MeasurementEvent) and seg.keep_outcome is not None:
            post_selected = True
        op = segment_superop(
            seg, circuit.qubits, level,
            amplifier=amplifier, noiseless=noiseless, _cache=cache,
        )
        vec = op.data @ vec
    dim = 2**circuit.qubits
    trace = float(np.real(vectorize(np.eye(dim)).conj() @ vec))
    if not post_selected and abs(trace - state.trace) > 1e-10:
        raise StructuralError(
            f"trace drifted to {trace} through a trace-preserving circuit"
        )
    return DensityVector(vec, circuit.qubits, trace=trace)


def has_measurements(circuit: DynamicCircuit) -> bool:
    """True if any segment (including branch inserts) measures."""

    def scan(segments: Iterable[Segment]) -> bool:
        for seg in segments:
            if isinstance(seg, MeasurementEvent):
                return True
        return False

    return scan(circuit.segments)


# ---------------------------------------------------------------------------
# Program construction
# ---------------------------------------------------------------------------


def inverse_circuit(circuit: DynamicCircuit) -> list[Segment]:
    """Pulse-inverse of a measurement-free circuit (reversed segment order)."""
    if has_measurements(circuit):
        raise StructuralError("a measured circuit has no global pulse inverse")
    out: list[Segment] = []
    for seg in reversed(circuit.segments):
        if isinstance(seg, LayerSpec):
            out.append(pulse_inverse(seg))
        else:
            out.append(GateOp(seg.unitary.conj().T, label=f"{seg.label}~I"))
    return out


def _global_channels(circuit: DynamicCircuit, cache: dict) -> tuple[SuperOperator, SuperOperator]:
    """(K, K_I) for the whole measurement-free circuit."""
    k = identity_superop(circuit.qubits)
    for seg in circuit.segments:
        k = segment_superop(seg, circuit.qubits, 0, _cache=cache) @ k
    ki = identity_superop(circuit.qubits)
    for seg in inverse_circuit(circuit):
        ki = segment_superop(seg, circuit.qubits, 0, _cache=cache) @ ki
    return k, ki


def build_program(
    circuit: DynamicCircuit,
    scheme: str,
    coefficients: CoefficientSet,
) -> AmplifiedProgram:
    """Assemble the weighted amplified-circuit family for one scheme.

    Schemes:
        ``"gkik"``: global amplification ``K (K_I K)^j`` — measurement-free
            circuits only (a measured circuit has no global pulse inverse).
        ``"lkik"``: per-layer amplification; measurement events are carried
            through unamplified with their branches amplified at the same level.
        ``"gate-insertion"``: per-layer repetition baseline ``K_l^(2j+1)``.
        ``"mve"``: per-layer amplification vectors from an ``mve`` coefficient
            set; measurement-free circuits only.

    Entry depths (relative to the unamplified circuit) are recorded for
    runtime-cost accounting.
    """
    from .mitigation import IncompatibleSchemeError  # local: avoid import cycle

    cache: dict = {}
    qubits = circuit.qubits
    tau = circuit.layer_duration()
    entries: list[ProgramEntry] = []
    depths: list[float] = []

    if scheme == "gkik":
        if has_measurements(circuit):
            raise IncompatibleSchemeError(
                "global amplification is incompatible with mid-circuit measurement; "
                "use the layered scheme"
            )
        k, ki = _global_channels(circuit, cache)
        echo = ki @ k
        for j, w in enumerate(coefficients.weights):
            power = SuperOperator(
                np.linalg.matrix_power(echo.data, j), qubits, kind="composite"
            )
            entries.append(ProgramEntry(float(w), (power, k), (2 * j + 1,)))
            depths.append(float(2 * j + 1))
    elif scheme in ("lkik", "gate-insertion"):
        amplifier = "kik" if scheme == "lkik" else "gate-insertion"
        for j, w in enumerate(coefficients.weights):
            factors = tuple(
                segment_superop(seg, qubits, j, amplifier=amplifier, _cache=cache)
                for seg in circuit.segments
            )
            entries.append(ProgramEntry(float(w), factors, (2 * j + 1,)))
            depths.append(float(2 * j + 1))
    elif scheme == "mve":
        if coefficients.entries is None:
            raise ValueError("mve scheme needs a coefficient set with amplification vectors")
        if has_measurements(circuit):
            raise IncompatibleSchemeError(
                "multivariate amplification vectors are defined for "
                "measurement-free layered circuits"
            )
        layers = circuit.layers()
        for entry in coefficients.entries:
            if len(entry.amplification) != len(layers):
                raise StructuralError(
                    f"amplification vector length {len(entry.amplification)} != "
                    f"layer count {len(layers)}"
                )
            factors = []
            amp_iter = iter(entry.amplification)
            depth_time = 0.0
            for seg in circuit.segments:
                if isinstance(seg, LayerSpec):
                    m = next(amp_iter)
                    if m % 2 != 1 or m < 1:
                        raise StructuralError(f"amplification factors must be odd, got {m}")
                    factors.append(amplify_layer(seg, (m - 1) // 2, _cache=cache))
                    depth_time += seg.duration * m
                else:
                    factors.append(segment_superop(seg, qubits, 0, _cache=cache))
            entries.append(ProgramEntry(entry.weight, tuple(factors), entry.amplification))
            depths.append(depth_time / tau if tau else 1.0)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return AmplifiedProgram(scheme=scheme, entries=entries, coefficients=coefficients, depths=depths)


# ---------------------------------------------------------------------------
# Layer / circuit splitting
# ---------------------------------------------------------------------------


def split_layer(layer: LayerSpec, parts: int) -> list[LayerSpec]:
    """Split a layer into ``parts`` equal-duration sub-layers.

    The drive schedule is cut at the split points (a sub-layer inherits the
    restriction of the schedule to its time window); dissipator rates are
    per-unit-time and stay unchanged, so composing the sub-layer channels
    reproduces the original channel.
    """
    if parts < 1:
        raise ValueError(f"parts must be >= 1, got {parts}")
    if parts == 1:
        return [layer]
    edges = [layer.duration * i / parts for i in range(parts + 1)]
    # Absolute schedule boundaries.
    bounds = [0.0]
    for dt, _ in layer.schedule:
        bounds.append(bounds[-1] + dt)
    out = []
    for i in range(parts):
        lo, hi = edges[i], edges[i + 1]
        sched: list[tuple[float, np.ndarray]] = []
        for (dt, h), b0, b1 in zip(layer.schedule, bounds[:-1], bounds[1:]):
            a, b = max(lo, b0), min(hi, b1)
            if b - a > 1e-12 * layer.duration:
                sched.append((b - a, h))
        total = sum(dt for dt, _ in sched)
        # Absorb cut-point rounding into the final segment.
        want = hi - lo
        if sched and abs(total - want) > 0:
            dt_last, h_last = sched[-1]
            sched[-1] = (dt_last + (want - total), h_last)
        out.append(
            LayerSpec(want, sched, list(layer.jumps), label=f"{layer.label}/{i + 1}of{parts}")
        )
    return out


def split_circuit(circuit: DynamicCircuit, parts: int) -> DynamicCircuit:
    """Split every top-level layer of a circuit into ``parts`` sub-layers."""
    segments: list[Segment] = []
    for seg in circuit.segments:
        if isinstance(seg, LayerSpec):
            segments.extend(split_layer(seg, parts))
        else:
            segments.append(seg)
    return DynamicCircuit(
        qubits=circuit.qubits,
        segments=segments,
        initial_state=circuit.initial_state,
        observable=circuit.observable,
        duration=circuit.duration,
    )


# ---------------------------------------------------------------------------
# JSON circuit files
# ---------------------------------------------------------------------------

_SCHEMA_PATH = pathlib.Path(__file__).parent / "schema" / "circuit.schema.json"
_schema_cache: dict | None = None


def _circuit_schema() -> dict:
    global _schema_cache
    if _schema_cache is None:
        _schema_cache = json.loads(_SCHEMA_PATH.read_text())
    return _schema_cache


def validate_circuit_dict(data: dict) -> None:
    """Validate a circuit dictionary against the JSON schema.

    Raises:
        StructuralError: with a JSON-pointer-style path to the offending field.
    """
    import jsonschema

    validator = jsonschema.Draft202012Validator(_circuit_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        pointer = "/" + "/".join(str(p) for p in err.absolute_path)
        raise StructuralError(f"circuit file invalid at {pointer or '/'}: {err.message}")


def _drive_matrix(terms: list[dict], qubits: int) -> np.ndarray:
    return pauli.hamiltonian(
        [(t["pauli"], t["coeff"]) for t in terms], qubits
    )


def _layer_from_dict(data: dict, qubits: int, index: int) -> LayerSpec:
    duration = float(data["duration"])
    if "schedule" in data:
        sched = []
        for part in data["schedule"]:
            sched.append((float(part["fraction"]) * duration, _drive_matrix(part["drive"], qubits)))
    else:
        sched = [(duration, _drive_matrix(data["drive"], qubits))]
    jumps = []
    for d in data.get("dissipators", []):
        jumps.append(
            (pauli.jump_operator(d["jump"], int(d["qubit"]), qubits), float(d["rate"]))
        )
    return LayerSpec(duration, sched, jumps, label=data.get("label", f"layer{index}"))


def _gates_from_list(gates: list[dict], qubits: int) -> list[Segment]:
    out: list[Segment] = []
    for g in gates:
        out.append(
            GateOp(pauli.gate(g["gate"], int(g["qubit"]), qubits), label=g["gate"])
        )
    return out


def _observable_from_dict(data: Any, qubits: int) -> Observable:
    if isinstance(data, str):
        if data.startswith("proj:"):
            bits = data[len("proj:"):]
            return Observable(pauli.basis_projector(bits), qubits, label=data)
        return Observable(pauli.operator(data), qubits, label=data)
    terms = [(t["pauli"], float(t["coeff"])) for t in data["pauli_sum"]]
    return Observable(pauli.hamiltonian(terms, qubits), qubits, label="pauli_sum")


def _state_from_string(spec: str) -> DensityVector:
    singles = []
    for ch in spec:
        if ch in "01":
            singles.append(pauli.basis_state(ch))
        elif ch == "+":
            singles.append(pauli.plus_state(1))
        else:
            raise StructuralError(f"invalid initial-state character {ch!r}")
    rho = singles[0]
    for s in singles[1:]:
        rho = np.kron(rho, s)
    return state_from_density(rho)


def load_circuit(source: dict | str | pathlib.Path) -> DynamicCircuit:
    """Load a circuit from a JSON file (path) or an already-parsed dictionary.

    See ``schema/circuit.schema.json`` for the format.  Validation errors carry
    a pointer to the offending field.
    """
    if isinstance(source, (str, pathlib.Path)):
        path = pathlib.Path(source)
        if not path.exists():
            raise FileNotFoundError(f"circuit file not found: {path}")
        data = json.loads(path.read_text())
    else:
        data = source
    validate_circuit_dict(data)
    qubits = int(data["qubits"])
    if len(data["initial_state"]) != qubits:
        raise StructuralError(
            f"circuit file invalid at /initial_state: "
            f"{len(data['initial_state'])} characters for {qubits} qubit(s)"
        )
    layers = [
        _layer_from_dict(l, qubits, i) for i, l in enumerate(data["layers"])
    ]
    segments: list[Segment] = list(layers)
    # Measurements are inserted after `position` layers; process in reverse so
    # earlier insertions do not shift later positions.
    events = sorted(
        data.get("measurements", []), key=lambda m: int(m["position"]), reverse=True
    )
    for m in events:
        pos = int(m["position"])
        if pos > len(layers):
            raise StructuralError(
                f"measurement position {pos} beyond the {len(layers)}-layer sequence"
            )
        branches = {
            outcome: _gates_from_list(gates, qubits)
            for outcome, gates in m.get("branches", {}).items()
        }
        event = MeasurementEvent(
            qubits=tuple(int(q) for q in m["qubits"]),
            branches=branches,
            keep_outcome=m.get("keep_outcome"),
        )
        segments.insert(pos, event)
    return DynamicCircuit(
        qubits=qubits,
        segments=segments,
        initial_state=_state_from_string(data["initial_state"]),
        observable=_observable_from_dict(data["observable"], qubits),
        duration=float(data["duration"]) if "duration" in data else None,
    )


def _pauli_terms(mat: np.ndarray, qubits: int, *, tol: float = 1e-12) -> list[dict]:
    """Decompose a Hermitian matrix into its (sparse) Pauli-string terms."""
    import itertools

    scale = max(1.0, float(np.max(np.abs(mat))))
    terms = []
    for chars in itertools.product("IXYZ", repeat=qubits):
        string = "".join(chars)
        coeff = complex(np.trace(pauli.operator(string) @ mat)) / 2**qubits
        if abs(coeff.imag) > tol * scale:
            raise StructuralError("drive matrix is not Hermitian")
        if abs(coeff.real) > tol * scale:
            terms.append({"pauli": string, "coeff": float(coeff.real)})
    return terms


def _named_jump(op: np.ndarray, rate: float, qubits: int) -> dict:
    for name in ("Z", "X", "Y", "sigma-", "sigma+"):
        for q in range(qubits):
            if np.array_equal(op, pauli.jump_operator(name, q, qubits)):
                return {"jump": name, "qubit": q, "rate": float(rate)}
    raise StructuralError(
        "dissipator is not a named single-qubit jump; it cannot be serialized"
    )


def _named_gate(gate: GateOp, qubits: int) -> dict:
    for name in ("I", "X", "Y", "Z", "H", "S"):
        for q in range(qubits):
            if np.allclose(gate.unitary, pauli.gate(name, q, qubits), atol=1e-12):
                return {"gate": name, "qubit": q}
    raise StructuralError(
        "feedforward gate is not a named single-qubit gate; it cannot be serialized"
    )


def _layer_to_dict(layer: LayerSpec) -> dict:
    qubits = layer.qubits
    out: dict[str, Any] = {"duration": float(layer.duration)}
    if layer.label:
        out["label"] = layer.label
    if len(layer.schedule) == 1:
        out["drive"] = _pauli_terms(layer.schedule[0][1], qubits)
    else:
        out["schedule"] = [
            {"fraction": float(dt / layer.duration), "drive": _pauli_terms(h, qubits)}
            for dt, h in layer.schedule
        ]
    if layer.jumps:
        out["dissipators"] = [
            _named_jump(op, rate, qubits) for op, rate in layer.jumps
        ]
    return out


def _state_to_string(state: DensityVector) -> str:
    import itertools

    from .liouville import devectorize

    rho = devectorize(state.data)
    for chars in itertools.product("01+", repeat=state.qubits):
        candidate = _state_from_string("".join(chars))
        if np.allclose(rho, devectorize(candidate.data), atol=1e-12):
            return "".join(chars)
    raise StructuralError(
        "initial state is not a product of |0>, |1>, |+>; it cannot be serialized"
    )


def _observable_to_json(obs: Observable) -> Any:
    diag = np.diag(obs.matrix)
    if (
        np.allclose(obs.matrix, np.diag(diag), atol=1e-12)
        and np.allclose(np.sort(diag.real), [0.0] * (len(diag) - 1) + [1.0], atol=1e-12)
        and np.allclose(diag.imag, 0.0, atol=1e-12)
    ):
        index = int(np.argmax(diag.real))
        return "proj:" + format(index, f"0{obs.qubits}b")
    terms = _pauli_terms(obs.matrix, obs.qubits)
    if len(terms) == 1 and terms[0]["coeff"] == 1.0:
        return terms[0]["pauli"]
    return {"pauli_sum": terms}


def circuit_to_dict(circuit: DynamicCircuit) -> dict:
    """Serialize a circuit back to its JSON-dictionary form.

    Inverse of :func:`load_circuit`: the result validates against the shipped
    schema and loads back to a circuit with the same channel.  Constructs the
    JSON format cannot express (top-level instantaneous gates, non-product
    initial states, unnamed jump operators) raise :class:`StructuralError`.
    """
    qubits = circuit.qubits
    layers: list[dict] = []
    measurements: list[dict] = []
    for seg in circuit.segments:
        if isinstance(seg, LayerSpec):
            layers.append(_layer_to_dict(seg))
        elif isinstance(seg, MeasurementEvent):
            event: dict[str, Any] = {
                "position": len(layers),
                "qubits": [int(q) for q in seg.qubits],
            }
            if seg.branches:
                event["branches"] = {
                    outcome: [
                        _named_gate(g, qubits)
                        if isinstance(g, GateOp)
                        else _raise_branch_error()
                        for g in gates
                    ]
                    for outcome, gates in seg.branches.items()
                }
            if seg.keep_outcome is not None:
                event["keep_outcome"] = seg.keep_outcome
            measurements.append(event)
        else:
            raise StructuralError(
                "top-level instantaneous gates have no JSON form; fold them "
                "into a measurement branch or a layer"
            )
    out: dict[str, Any] = {
        "qubits": qubits,
        "layers": layers,
        "initial_state": _state_to_string(circuit.initial_state),
        "observable": _observable_to_json(circuit.observable),
    }
    if measurements:
        out["measurements"] = measurements
    return out


def _raise_branch_error() -> dict:
    raise StructuralError(
        "measurement branches with non-gate segments cannot be serialized"
    )
