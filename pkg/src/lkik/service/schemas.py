"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field

Scheme = Literal["gkik", "lkik", "gate-insertion", "mve"]
Family = Literal["taylor", "adaptive", "mve"]


class ErrorResponse(BaseModel):
    """Uniform error shape for every non-2xx response."""

    error: str
    message: str
    pointer: str | None = None


class CoefficientsRequest(BaseModel):
    family: Family = "taylor"
    order: int = Field(ge=0, le=30)
    g: float | None = Field(default=None, gt=0.0, lt=1.0, description="Adaptive fit-window edge.")
    layers: int | None = Field(default=None, ge=1, description="Layer count (multivariate family).")


class CoefficientEntry(BaseModel):
    index: int
    weight: float
    amplification: list[int] = Field(description="Odd duration factor per layer.")


class CoefficientsResponse(BaseModel):
    family: str
    order: int
    weights: list[float]
    exact: list[str] | None = Field(default=None, description="Rational weights, when closed forms exist.")
    entries: list[CoefficientEntry]
    gamma: float
    gamma_sq: float
    weight_sum: float
    g: float | None = None
    gamma_linear_theory: float | None = Field(
        default=None,
        description="Alternative first-order multivariate overhead; reported alongside gamma, never merged.",
    )


class MitigateRequest(BaseModel):
    circuit: dict[str, Any]
    order: int = Field(ge=0, le=30)
    scheme: Scheme = "lkik"
    family: Literal["taylor", "adaptive"] = "taylor"
    g: float | None = Field(default=None, gt=0.0, lt=1.0)


class MitigateResponse(BaseModel):
    scheme: str
    order: int
    qubits: int
    layers: int
    weights: list[float]
    amplifications: list[list[int]]
    raw_values: list[float]
    noisy: float = Field(description="Unmitigated expectation value (order-0 run).")
    mitigated: float
    ideal: float
    delta: float
    mu: float | None = None
    g: float | None = None
    gamma: float
    weight_sum: float
    note: str | None = None


class CircuitRequest(BaseModel):
    circuit: dict[str, Any]


class EchoResponse(BaseModel):
    mu: float = Field(description="Echo survival of the initial state.")
    g: float = Field(description="Adaptive fit-window edge mu**2.")


class MagnusRequest(BaseModel):
    circuit: dict[str, Any]
    layer_counts: list[int] = Field(default=[1, 2, 4, 8, 16], min_length=1)
    quadrature: int | None = Field(default=None, ge=2, le=256)


class MagnusRow(BaseModel):
    layers: int
    measured_bias: float = Field(description="Operator-norm distance of the layered asymptote from the ideal channel.")
    bound: float = Field(description="(1/2) sum of squared layer widths times ||noise generator||^2.")
    thin_layer_prediction: float = Field(description="Norm of the thin-layer effective second Magnus term.")


class MagnusReportModel(BaseModel):
    omega1_norm: float
    omega2_norm: float
    triangle_norms: list[float]
    square_norms: dict[str, float]
    decomposition_residual: float
    quadrature_order: int


class MagnusResponse(BaseModel):
    report: MagnusReportModel
    rows: list[MagnusRow]


class DriftRequest(BaseModel):
    delta: tuple[float, float] = (0.08, 0.16)
    order: int = Field(default=2, ge=0, le=30)
    n_hop: int = Field(default=20, ge=1)
    rounds: int = Field(default=3500, ge=1)
    seed: int = Field(default=20260823, ge=0)
    replicates: int = Field(default=1, ge=1)


class DriftRow(BaseModel):
    policy: str
    order: int
    estimate: float
    stderr: float
    n_hop: int
    rounds: int
    seed: int
    replicate: int


class DriftResponse(BaseModel):
    columns: list[str]
    rows: list[DriftRow]


class ExperimentRequest(BaseModel):
    config: dict[str, Any]
    out: str | None = None
    seed: int | None = Field(default=None, ge=0)
    threads: int = Field(default=1, ge=1, le=64)


class ManifestOutput(BaseModel):
    rows: int
    sha256: str


class ExperimentResponse(BaseModel):
    name: str
    kind: str
    config_sha256: str
    effective_config: dict[str, Any]
    version: str
    seeds: list[int]
    outputs: dict[str, ManifestOutput]


class VersionResponse(BaseModel):
    version: str


class HealthResponse(BaseModel):
    status: Literal["ok"] = "ok"
