"""Liouville-space simulation and pulse-inverse error mitigation."""

from __future__ import annotations

__version__ = "0.1.0"

from .coefficients import (
    CoefficientError,
    CoefficientSet,
    MVEEntry,
    adaptive_coefficients,
    general_mve_coefficients,
    mve_program_coefficients,
    runtime_cost,
    sampling_overhead,
    taylor_coefficients,
)
from .circuits import (
    AmplifiedProgram,
    DynamicCircuit,
    GateInsertionWarning,
    GateOp,
    LayerSpec,
    MeasurementEvent,
    StructuralError,
    amplify_layer,
    build_program,
    circuit_superop,
    gate_insertion_amplify,
    load_circuit,
    pulse_inverse,
    simulate_dynamic,
    split_circuit,
    split_layer,
)
from .liouville import (
    AccuracyError,
    DensityVector,
    DimensionError,
    Observable,
    SpectralFloorError,
    SuperOperator,
    channel_exp,
    expectation,
    identity_superop,
    inv_sqrt,
    lindbladian,
    operator_norm,
    state_from_density,
    unitary_superop,
    vectorize,
)
from .magnus import (
    MagnusReport,
    ThinLayerWarning,
    bias_bound,
    echo_magnus_residual,
    noise_generator_norm,
    omega1,
    omega2,
    thin_layer_omega2_eff,
)
from .mitigation import (
    IncompatibleSchemeError,
    MitigationResult,
    PostSelectedResult,
    asymptote_distance,
    echo_survival,
    gkik_asymptote,
    ideal_channel,
    lkik_asymptote,
    mitigate,
    mitigate_postselected,
    simulate_ideal,
)
from .sampling import (
    ChannelConsistencyError,
    CoverageError,
    DriftSchedule,
    DriftSegment,
    ExecutionPlan,
    PlanResult,
    run_plan,
    sample_shot,
    survival_probability,
)
from .experiments import (
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    run_experiment,
    validate_config,
)
