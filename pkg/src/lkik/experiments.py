"""Declarative desk-scale experiments with CSV + manifest outputs.

Six experiment kinds cover the library's headline behaviors:

* ``order-sweep`` — mitigated bias vs. order for several layer counts on the
  four-qubit chain; the single-layer curve saturates at the global-asymptote
  prediction.
* ``layer-sweep`` — fixed-order bias vs. layer count, exhibiting the 1/L²
  thin-layer law.
* ``dynamic-demo`` — the same chain with and without mid-circuit measurement
  + feedforward, showing layered mitigation works equally well on both.
* ``drift-demo`` — shot-sampled mitigation under abruptly drifting noise,
  comparing the hopping and sequential execution orders.
* ``gi-vs-kik`` — pulse-inverse vs. gate-insertion amplification on a
  swap-like layer with one-sided amplitude damping.
* ``cost-compare`` — runtime cost (γ²·mean depth) of single-variable layered
  extrapolation vs. the multivariate scheme.

Configs are JSON documents validated against
``schema/experiment.schema.json``.  Outputs are data, not images: one CSV
per experiment plus a ``manifest.json`` recording the config hash, effective
parameters, seeds and library version — no timestamps, so reruns are
byte-identical.  The ``LKIK_OUT`` environment variable overrides the output
directory (and nothing else).
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import hashlib
import json
import os
import pathlib
import tempfile
from typing import Callable, Mapping, Sequence

import jsonschema
import numpy as np
from scipy.linalg import expm

from . import __version__, pauli
from .circuits import (
    DynamicCircuit,
    GateOp,
    LayerSpec,
    MeasurementEvent,
    build_program,
    load_circuit,
    split_circuit,
)
from .coefficients import (
    general_mve_coefficients,
    runtime_cost,
    taylor_coefficients,
)
from .liouville import (
    DensityVector,
    Observable,
    SuperOperator,
    expectation,
    identity_superop,
    state_from_density,
    unitary_superop,
)
from .mitigation import lkik_asymptote, mitigate, simulate_ideal
from .sampling import DriftSegment, DriftSchedule, ExecutionPlan, run_plan

__all__ = [
    "ConfigError",
    "ExperimentError",
    "ExperimentConfig",
    "KINDS",
    "chain_circuit",
    "dynamic_chain_circuit",
    "swap_damping_circuit",
    "over_rotation_survival",
    "over_rotation_channel",
    "validate_config",
    "run_experiment",
]

KINDS = (
    "order-sweep",
    "layer-sweep",
    "dynamic-demo",
    "drift-demo",
    "gi-vs-kik",
    "cost-compare",
)

#: Environment variable overriding the output directory.
OUTPUT_ENV = "LKIK_OUT"

_SCHEMA_PATH = pathlib.Path(__file__).with_name("schema") / "experiment.schema.json"

#: Keys each kind accepts beyond the common (kind, name, out).
_KIND_KEYS = {
    "order-sweep": {"circuit", "xi", "noise", "layers", "orders"},
    "layer-sweep": {"circuit", "xi", "noise", "layers", "orders"},
    "dynamic-demo": {"xi", "noise", "layers", "orders"},
    "drift-demo": {"delta", "order", "n_hop", "rounds", "seed", "replicates"},
    "gi-vs-kik": {"xi", "orders"},
    "cost-compare": {"layers", "orders"},
}

_KIND_DEFAULTS: dict[str, dict] = {
    "order-sweep": {
        "xi": 0.02,
        "noise": "dephasing",
        "layers": [1, 2, 5, 10],
        "orders": list(range(0, 13)),
    },
    "layer-sweep": {
        "xi": 0.02,
        "noise": "dephasing",
        "layers": list(range(8, 21)),
        "orders": [7],
    },
    "dynamic-demo": {
        "xi": 0.1,
        "noise": "damping",
        "layers": [10],
        "orders": list(range(0, 9)),
    },
    "drift-demo": {
        "delta": [0.08, 0.16],
        "order": 2,
        "n_hop": 20,
        "rounds": 3500,
        "seed": 20260823,
        "replicates": 200,
    },
    "gi-vs-kik": {"xi": 0.05, "orders": [0, 1, 2, 3]},
    "cost-compare": {"layers": [1, 2, 3], "orders": [1, 2, 3, 4, 5]},
}

_NOISE_JUMPS = {"dephasing": "Z", "damping": "sigma-"}


class ConfigError(ValueError):
    """Invalid experiment configuration; carries a JSON pointer."""

    def __init__(self, message: str, pointer: str = "") -> None:
        super().__init__(message)
        self.pointer = pointer


class ExperimentError(RuntimeError):
    """A sweep point failed; the message names its coordinates."""


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Schema-checked configuration with defaults filled in."""

    kind: str
    name: str
    params: dict
    out: str | None
    source_digest: str

    def effective(self) -> dict:
        merged = {"kind": self.kind, "name": self.name, **self.params}
        if self.out is not None:
            merged["out"] = self.out
        return merged


# --------------------------------------------------------------------------
# Circuit presets
# --------------------------------------------------------------------------


def chain_circuit(
    xi: float,
    *,
    noise: str = "dephasing",
    qubits: int = 4,
    tau: float = 1.0,
) -> DynamicCircuit:
    """Nearest-neighbour XX chain with local noise on every qubit.

    Drive ``H = sum_i X_i X_{i+1}``, evolution time ``tau``, initial state
    ``|0...0>`` and observable ``|0...0><0...0|`` (initial-state survival).
    ``noise`` is ``dephasing`` (Z jumps) or ``damping`` (sigma- jumps), each
    with rate ``xi`` per qubit.
    """
    if noise not in _NOISE_JUMPS:
        raise ValueError(f"noise must be one of {sorted(_NOISE_JUMPS)}, got {noise!r}")
    terms = []
    for i in range(qubits - 1):
        word = "".join("X" if j in (i, i + 1) else "I" for j in range(qubits))
        terms.append((word, 1.0))
    drive = pauli.hamiltonian(terms, qubits)
    jumps = [
        (pauli.jump_operator(_NOISE_JUMPS[noise], q, qubits), float(xi))
        for q in range(qubits)
    ]
    layer = LayerSpec(tau, [(tau, drive)], jumps, label="chain")
    bits = "0" * qubits
    return DynamicCircuit(
        qubits,
        [layer],
        state_from_density(pauli.basis_state(bits)),
        Observable(pauli.basis_projector(bits), qubits, label=f"proj:{bits}"),
    )


def dynamic_chain_circuit(
    xi: float,
    layers: int = 10,
    *,
    noise: str = "damping",
) -> DynamicCircuit:
    """The split chain with a measurement + feedforward after every layer.

    Qubit 0 is measured in the computational basis after each layer; on
    outcome '1' a Hadamard is applied to each of the remaining qubits, on
    '0' nothing happens.
    """
    base = split_circuit(chain_circuit(xi, noise=noise), layers)
    qubits = base.qubits
    segments = []
    for layer in base.layers():
        segments.append(layer)
        segments.append(
            MeasurementEvent(
                qubits=(0,),
                branches={
                    "1": [
                        GateOp(pauli.gate("H", q, qubits), label="H")
                        for q in range(1, qubits)
                    ]
                },
            )
        )
    return DynamicCircuit(qubits, segments, base.initial_state, base.observable)


def swap_damping_circuit(xi: float = 0.05, *, tau: float = 1.0) -> DynamicCircuit:
    """Two-qubit SWAP layer with one-sided amplitude damping.

    The SWAP is generated by a burst schedule — the drive is compressed into
    the first eighth of the layer, the rest idles — as on hardware, where
    gates are short and idling dominates.  Damping acts on qubit 0 only.
    Both asymmetries matter: for a uniform-schedule SWAP (or symmetric
    damping) the interaction-picture noise averages equally over the two
    half-periods and gate insertion's leading error cancels by accident,
    hiding its bias.
    """
    qubits = 2
    swap_drive = pauli.hamiltonian(
        [("XX", np.pi / 4), ("YY", np.pi / 4), ("ZZ", np.pi / 4)], qubits
    )
    idle = np.zeros_like(swap_drive)
    schedule = [(tau / 8, 8 * swap_drive), (7 * tau / 8, idle)]
    jumps = [(pauli.jump_operator("sigma-", 0, qubits), float(xi))]
    layer = LayerSpec(tau, schedule, jumps, label="swap-burst")
    return DynamicCircuit(
        qubits,
        [layer],
        state_from_density(pauli.basis_state("01")),
        Observable(pauli.basis_projector("10"), qubits, label="proj:10"),
    )


def _over_rotation_error(delta: float) -> SuperOperator:
    """Twirled over-rotation: X⊗X error with probability sin²(delta)."""
    p = float(np.sin(delta) ** 2)
    ident = identity_superop(2)
    err = unitary_superop(pauli.operator("XX"))
    return SuperOperator((1.0 - p) * ident.data + p * err.data, 2)


_RXX_ANGLE = np.pi / 2
_RXX_COUNT = 4


def over_rotation_channel(level: int, delta: float) -> SuperOperator:
    """Noise-amplified channel of the two-qubit echo identity circuit.

    The ideal circuit is four X⊗X rotations by π/2 (an identity overall).
    Each rotation is followed by the twirled over-rotation error channel.
    Amplification composes the circuit with pulse-inverted copies,
    ``K (K_I K)^level``; since the error commutes with the rotations this
    amplifies the error channel ``4·(2·level+1)`` times.
    """
    xx = pauli.operator("XX")
    err = _over_rotation_error(delta)

    def block(angle: float) -> np.ndarray:
        u = expm(-1j * (angle / 2.0) * xx)
        step = err.data @ unitary_superop(u).data
        return np.linalg.matrix_power(step, _RXX_COUNT)

    forward = block(_RXX_ANGLE)
    inverse = block(-_RXX_ANGLE)
    echo = inverse @ forward
    return SuperOperator(forward @ np.linalg.matrix_power(echo, level), 2)


def over_rotation_survival(level: int, params: Mapping[str, float]) -> float:
    """Closed-form |00> survival of :func:`over_rotation_channel`.

    Per amplified execution the X⊗X error fires ``4(2·level+1)`` times with
    probability ``p = sin²(delta)``; the net flip probability follows the
    parity channel ``(1 - lambda^(2·level+1))/2`` with
    ``lambda = (1 - 2p)^4``.
    """
    p = float(np.sin(params["delta"]) ** 2)
    lam = (1.0 - 2.0 * p) ** _RXX_COUNT
    return 0.5 * (1.0 + lam ** (2 * level + 1))


# --------------------------------------------------------------------------
# Config validation
# --------------------------------------------------------------------------


def _schema() -> dict:
    return json.loads(_SCHEMA_PATH.read_text())


def validate_config(source: str | pathlib.Path | Mapping) -> ExperimentConfig:
    """Validate a config file (or parsed dict) and fill in defaults.

    Raises :class:`ConfigError` with a JSON pointer for unknown keys, keys
    not applicable to the experiment kind, bad types/ranges, and missing
    circuit files.
    """
    base_dir = pathlib.Path.cwd()
    if isinstance(source, (str, pathlib.Path)):
        path = pathlib.Path(source)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        base_dir = path.parent
    else:
        data = dict(source)

    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        pointer = "/" + "/".join(str(p) for p in err.absolute_path)
        raise ConfigError(f"{err.message} (at {pointer or '/'})", pointer)

    kind = data["kind"]
    allowed = _KIND_KEYS[kind] | {"kind", "name", "out"}
    for key in data:
        if key not in allowed:
            raise ConfigError(
                f"key {key!r} does not apply to kind {kind!r}", f"/{key}"
            )

    params = dict(_KIND_DEFAULTS[kind])
    for key, value in data.items():
        if key in ("kind", "name", "out"):
            continue
        params[key] = value

    if "circuit" in params:
        circuit_path = pathlib.Path(params["circuit"])
        if not circuit_path.is_absolute():
            circuit_path = base_dir / circuit_path
        if not circuit_path.exists():
            raise ConfigError(
                f"circuit file not found: {circuit_path}", "/circuit"
            )
        params["circuit"] = str(circuit_path)

    digest = hashlib.sha256(
        json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()
    return ExperimentConfig(
        kind=kind,
        name=str(data.get("name", kind)),
        params=params,
        out=data.get("out"),
        source_digest=digest,
    )


# --------------------------------------------------------------------------
# Experiment execution
# --------------------------------------------------------------------------


def _base_circuit(params: Mapping, default_noise: str) -> DynamicCircuit:
    if "circuit" in params:
        circuit = load_circuit(params["circuit"])
        if "xi" in params:
            circuit = _override_rates(circuit, float(params["xi"]))
        return circuit
    return chain_circuit(float(params["xi"]), noise=params.get("noise", default_noise))


def _override_rates(circuit: DynamicCircuit, xi: float) -> DynamicCircuit:
    """Set every dissipator rate in every layer to ``xi``."""
    segments = []
    for seg in circuit.segments:
        if isinstance(seg, LayerSpec):
            segments.append(
                LayerSpec(
                    seg.duration,
                    list(seg.schedule),
                    [(op, xi) for op, _ in seg.jumps],
                    label=seg.label,
                )
            )
        else:
            segments.append(seg)
    return DynamicCircuit(
        circuit.qubits,
        segments,
        circuit.initial_state,
        circuit.observable,
        duration=circuit.duration,
    )


def _ideal_value(circuit: DynamicCircuit) -> float:
    return expectation(circuit.observable, simulate_ideal(circuit))


def _order_curve(
    circuit: DynamicCircuit, orders: Sequence[int]
) -> list[tuple[int, float]]:
    """(order, mitigated value) along a Taylor-order sweep.

    The amplified expectation values are evaluated once at the largest
    order; lower orders reuse them with their own weights (mitigation
    combinations are affine, so this is identical to mitigating per order).
    """
    max_order = max(orders)
    program = build_program(circuit, "lkik", taylor_coefficients(max_order))
    raw = [
        expectation(circuit.observable, entry.apply(circuit.initial_state))
        for entry in program.entries
    ]
    curve = []
    for order in orders:
        weights = [float(w) for w in taylor_coefficients(order).weights]
        curve.append((order, float(np.dot(weights, raw[: order + 1]))))
    return curve


def _asymptote_value(circuit: DynamicCircuit) -> float:
    op = lkik_asymptote(circuit)
    state = DensityVector(op.data @ circuit.initial_state.data, circuit.qubits)
    return expectation(circuit.observable, state)


def _run_order_sweep(params: Mapping, threads: int, progress) -> tuple[list[str], list[list]]:
    header = ["layers", "order", "mitigated", "ideal", "delta", "abs_delta", "asymptote"]
    orders = [int(m) for m in params["orders"]]
    base = _base_circuit(params, "dephasing")

    def point(layers: int) -> list[list]:
        try:
            circuit = split_circuit(base, layers) if layers > 1 else base
            ideal = _ideal_value(circuit)
            asym = _asymptote_value(circuit)
            rows = []
            for order, mitigated in _order_curve(circuit, orders):
                delta = mitigated - ideal
                rows.append([layers, order, mitigated, ideal, delta, abs(delta), asym])
            return rows
        except Exception as exc:
            raise ExperimentError(f"order-sweep point L={layers} failed: {exc}") from exc

    return header, _pooled(point, [int(L) for L in params["layers"]], threads, progress, "L")


def _run_layer_sweep(params: Mapping, threads: int, progress) -> tuple[list[str], list[list]]:
    header = ["layers", "order", "mitigated", "ideal", "delta", "abs_delta", "scaled_delta"]
    orders = [int(m) for m in params["orders"]]
    base = _base_circuit(params, "dephasing")

    def point(layers: int) -> list[list]:
        try:
            circuit = split_circuit(base, layers) if layers > 1 else base
            ideal = _ideal_value(circuit)
            rows = []
            for order, mitigated in _order_curve(circuit, orders):
                delta = mitigated - ideal
                rows.append(
                    [layers, order, mitigated, ideal, delta, abs(delta), abs(delta) * layers**2]
                )
            return rows
        except Exception as exc:
            raise ExperimentError(f"layer-sweep point L={layers} failed: {exc}") from exc

    return header, _pooled(point, [int(L) for L in params["layers"]], threads, progress, "L")


def _run_dynamic_demo(params: Mapping, threads: int, progress) -> tuple[list[str], list[list]]:
    header = ["variant", "order", "mitigated", "ideal", "delta", "abs_delta"]
    orders = [int(m) for m in params["orders"]]
    xi = float(params["xi"])
    noise = params["noise"]
    layers = int(params["layers"][0])
    variants = {
        "unitary": split_circuit(chain_circuit(xi, noise=noise), layers),
        "dynamic": dynamic_chain_circuit(xi, layers, noise=noise),
    }

    def point(variant: str) -> list[list]:
        try:
            circuit = variants[variant]
            ideal = _ideal_value(circuit)
            rows = []
            for order, mitigated in _order_curve(circuit, orders):
                delta = mitigated - ideal
                rows.append([variant, order, mitigated, ideal, delta, abs(delta)])
            return rows
        except Exception as exc:
            raise ExperimentError(
                f"dynamic-demo variant={variant} failed: {exc}"
            ) from exc

    return header, _pooled(point, list(variants), threads, progress, "variant")


def _run_drift_demo(params: Mapping, threads: int, progress) -> tuple[list[str], list[list]]:
    header = ["policy", "order", "estimate", "stderr", "n_hop", "rounds", "seed", "replicate"]
    order = int(params["order"])
    levels = tuple(range(order + 1))
    n_hop, rounds = int(params["n_hop"]), int(params["rounds"])
    seed, replicates = int(params["seed"]), int(params["replicates"])
    deltas = [float(d) for d in params["delta"]]
    weights = [float(w) for w in taylor_coefficients(order).weights]
    total = n_hop * rounds * len(levels)
    half = total // 2
    drift = DriftSchedule(
        [DriftSegment(half, {"delta": deltas[0]}), DriftSegment(total - half, {"delta": deltas[1]})],
        label="abrupt",
    )

    def point(policy: str) -> list[list]:
        try:
            rows = []
            for rep in range(replicates):
                plan = ExecutionPlan(policy, n_hop, rounds, levels, seed)
                res = run_plan(over_rotation_survival, drift, plan, weights, replicate=rep)
                rows.append(
                    [policy, order, res.estimate, res.stderr, n_hop, rounds, seed, rep]
                )
            return rows
        except Exception as exc:
            raise ExperimentError(f"drift-demo policy={policy} failed: {exc}") from exc

    return header, _pooled(point, ["hopping", "sequential"], threads, progress, "policy")


def _run_gi_vs_kik(params: Mapping, threads: int, progress) -> tuple[list[str], list[list]]:
    header = ["scheme", "order", "mitigated", "ideal", "delta", "abs_delta", "note"]
    orders = [int(m) for m in params["orders"]]
    circuit = swap_damping_circuit(float(params["xi"]))

    def point(scheme: str) -> list[list]:
        try:
            rows = []
            for order in orders:
                res = mitigate(circuit, order, scheme=scheme)
                rows.append(
                    [scheme, order, res.mitigated, res.ideal, res.delta, abs(res.delta), res.note or ""]
                )
            return rows
        except Exception as exc:
            raise ExperimentError(f"gi-vs-kik scheme={scheme} failed: {exc}") from exc

    return header, _pooled(point, ["lkik", "gate-insertion"], threads, progress, "scheme")


def _run_cost_compare(params: Mapping, threads: int, progress) -> tuple[list[str], list[list]]:
    header = ["method", "layers", "order", "gamma", "gamma_sq", "mean_depth", "cost"]
    layer_counts = [int(L) for L in params["layers"]]
    orders = [int(m) for m in params["orders"]]

    def point(layers: int) -> list[list]:
        try:
            rows = []
            for order in orders:
                slt = taylor_coefficients(order)
                slt_weights = [float(w) for w in slt.weights]
                slt_depths = [2 * j + 1 for j in range(order + 1)]
                cost = runtime_cost(slt_weights, slt_depths)
                rows.append(
                    ["slt", layers, order, cost["gamma"], cost["gamma_sq"], cost["mean_depth"], cost["cost"]]
                )
                mve = general_mve_coefficients(layers, order)
                mve_weights = [float(e.weight) for e in mve.entries]
                # Entry depth = mean per-layer duration factor; amplification
                # vectors already hold the odd factors (1, 3, 5, ...).
                mve_depths = [float(np.mean(e.amplification)) for e in mve.entries]
                cost = runtime_cost(mve_weights, mve_depths)
                rows.append(
                    ["mve", layers, order, cost["gamma"], cost["gamma_sq"], cost["mean_depth"], cost["cost"]]
                )
            return rows
        except Exception as exc:
            raise ExperimentError(f"cost-compare point L={layers} failed: {exc}") from exc

    return header, _pooled(point, layer_counts, threads, progress, "L")


_RUNNERS: dict[str, Callable] = {
    "order-sweep": _run_order_sweep,
    "layer-sweep": _run_layer_sweep,
    "dynamic-demo": _run_dynamic_demo,
    "drift-demo": _run_drift_demo,
    "gi-vs-kik": _run_gi_vs_kik,
    "cost-compare": _run_cost_compare,
}


def _pooled(point, keys, threads, progress, label) -> list[list]:
    """Run sweep points in a worker pool; reduce in input order."""
    rows: list[list] = []
    if threads <= 1 or len(keys) <= 1:
        results = [point(key) for key in keys]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(point, keys))
    for key, result in zip(keys, results):
        rows.extend(result)
        if progress is not None:
            progress(f"{label}={key}: {len(result)} rows")
    return rows


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_atomic(path: pathlib.Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_experiment(
    config: ExperimentConfig | str | pathlib.Path | Mapping,
    *,
    out_dir: str | pathlib.Path | None = None,
    seed: int | None = None,
    threads: int = 1,
    progress: Callable[[str], None] | None = None,
) -> dict:
    """Run an experiment and write ``<name>.csv`` + ``manifest.json``.

    ``out_dir`` overrides the config's ``out`` (which defaults to
    ``results/<name>``); the ``LKIK_OUT`` environment variable overrides the
    base directory last.  ``seed`` replaces the config seed for shot-mode
    experiments.  Returns the manifest dictionary.
    """
    if not isinstance(config, ExperimentConfig):
        config = validate_config(config)
    params = dict(config.params)
    if seed is not None:
        if "seed" not in params:
            raise ConfigError(
                f"kind {config.kind!r} is exact-mode and takes no seed", "/seed"
            )
        params["seed"] = int(seed)

    header, rows = _RUNNERS[config.kind](params, threads, progress)

    target = pathlib.Path(out_dir or config.out or f"results/{config.name}")
    env_override = os.environ.get(OUTPUT_ENV)
    if env_override:
        target = pathlib.Path(env_override) / target.name
    target.mkdir(parents=True, exist_ok=True)

    csv_path = target / f"{config.name}.csv"
    lines = [",".join(header)]
    lines += [",".join(_format_cell(cell) for cell in row) for row in rows]
    csv_text = "\n".join(lines) + "\n"
    _write_atomic(csv_path, csv_text)

    manifest = {
        "name": config.name,
        "kind": config.kind,
        "config_sha256": config.source_digest,
        "effective_config": {**params, "kind": config.kind, "name": config.name},
        "version": __version__,
        "seeds": [params["seed"]] if "seed" in params else [],
        "outputs": {
            csv_path.name: {
                "rows": len(rows),
                "sha256": hashlib.sha256(csv_text.encode()).hexdigest(),
            }
        },
    }
    _write_atomic(target / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
