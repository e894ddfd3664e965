"""FastAPI service exposing the mitigation engine.

All endpoints are stateless request/response wrappers over the core
package; every deterministic computation is safe to retry.  Errors use one
shape — ``{"error", "message", "pointer"}`` — with status 400 for invalid
inputs and 500 for runtime failures.
"""

from __future__ import annotations

import itertools

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import __version__
from ..circuits import load_circuit, split_circuit
from ..coefficients import (
    CoefficientError,
    adaptive_coefficients,
    general_mve_coefficients,
    mve_program_coefficients,
    sampling_overhead,
    taylor_coefficients,
)
from ..experiments import over_rotation_survival, run_experiment, validate_config
from ..liouville import operator_norm
from ..magnus import bias_bound, omega2, thin_layer_omega2_eff
from ..mitigation import asymptote_distance, echo_survival, mitigate
from ..sampling import DriftSegment, DriftSchedule, ExecutionPlan, run_plan
from . import schemas


def _error_payload(exc: Exception) -> dict:
    return schemas.ErrorResponse(
        error=type(exc).__name__,
        message=str(exc),
        pointer=getattr(exc, "pointer", None) or None,
    ).model_dump()


def create_app() -> FastAPI:
    app = FastAPI(title="lkik", version=__version__)

    @app.exception_handler(RequestValidationError)
    async def _on_request_validation(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        pointer = "/" + "/".join(str(p) for p in first.get("loc", []) if p != "body")
        payload = schemas.ErrorResponse(
            error="RequestValidationError",
            message=first.get("msg", "invalid request"),
            pointer=pointer or None,
        ).model_dump()
        return JSONResponse(status_code=400, content=payload)

    # Every domain input error in the package subclasses ValueError and every
    # domain runtime failure subclasses RuntimeError, so three handlers cover
    # the whole family (dispatch walks the MRO).
    @app.exception_handler(ValueError)
    async def _on_invalid_input(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content=_error_payload(exc))

    @app.exception_handler(FileNotFoundError)
    async def _on_missing_file(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=400, content=_error_payload(exc))

    @app.exception_handler(RuntimeError)
    async def _on_runtime_failure(request: Request, exc: RuntimeError):
        return JSONResponse(status_code=500, content=_error_payload(exc))

    @app.get("/healthz", response_model=schemas.HealthResponse)
    async def healthz() -> schemas.HealthResponse:
        return schemas.HealthResponse()

    @app.get("/version", response_model=schemas.VersionResponse)
    async def version() -> schemas.VersionResponse:
        return schemas.VersionResponse(version=__version__)

    @app.post("/coefficients", response_model=schemas.CoefficientsResponse)
    async def coefficients(req: schemas.CoefficientsRequest) -> schemas.CoefficientsResponse:
        if req.family == "taylor":
            cs = taylor_coefficients(req.order)
        elif req.family == "adaptive":
            if req.g is None:
                raise CoefficientError("adaptive family needs the fit-window edge g")
            cs = adaptive_coefficients(req.order, req.g)
        else:
            if req.layers is None:
                raise CoefficientError("multivariate family needs the layer count")
            if req.order in (1, 2):
                cs = mve_program_coefficients(req.layers, req.order)
            else:
                cs = general_mve_coefficients(req.layers, req.order)

        if cs.entries is not None:
            entries = [
                schemas.CoefficientEntry(
                    index=i, weight=float(e.weight), amplification=list(e.amplification)
                )
                for i, e in enumerate(cs.entries)
            ]
            weights = [float(e.weight) for e in cs.entries]
            exact = (
                [str(e.exact) for e in cs.entries]
                if all(e.exact is not None for e in cs.entries)
                else None
            )
        else:
            weights = [float(w) for w in cs.weights]
            entries = [
                schemas.CoefficientEntry(index=j, weight=w, amplification=[2 * j + 1])
                for j, w in enumerate(weights)
            ]
            exact = [str(f) for f in cs.exact] if cs.exact is not None else None
        gamma, gamma_sq = sampling_overhead(weights)
        return schemas.CoefficientsResponse(
            family=req.family,
            order=cs.order,
            weights=weights,
            exact=exact,
            entries=entries,
            gamma=gamma,
            gamma_sq=gamma_sq,
            weight_sum=float(cs.weight_sum),
            g=cs.g,
            gamma_linear_theory=cs.gamma_linear_theory,
        )

    @app.post("/mitigate", response_model=schemas.MitigateResponse)
    async def mitigate_endpoint(req: schemas.MitigateRequest) -> schemas.MitigateResponse:
        circuit = load_circuit(req.circuit)
        result = mitigate(
            circuit, req.order, scheme=req.scheme, family=req.family, g=req.g
        )
        return schemas.MitigateResponse(**result.as_dict())

    @app.post("/echo", response_model=schemas.EchoResponse)
    async def echo(req: schemas.CircuitRequest) -> schemas.EchoResponse:
        circuit = load_circuit(req.circuit)
        mu = echo_survival(circuit)
        return schemas.EchoResponse(mu=mu, g=mu * mu)

    @app.post("/magnus/report", response_model=schemas.MagnusResponse)
    async def magnus_report(req: schemas.MagnusRequest) -> schemas.MagnusResponse:
        circuit = load_circuit(req.circuit)
        kwargs = {} if req.quadrature is None else {"q": req.quadrature}
        report = omega2(circuit, **kwargs)
        rows = []
        for layers in req.layer_counts:
            split = split_circuit(circuit, layers) if layers > 1 else circuit
            widths = [layer.duration for layer in split.layers()]
            boundaries = [0.0, *itertools.accumulate(widths)]
            rows.append(
                schemas.MagnusRow(
                    layers=layers,
                    measured_bias=asymptote_distance(split, "lkik"),
                    bound=bias_bound(circuit, boundaries),
                    thin_layer_prediction=operator_norm(
                        thin_layer_omega2_eff(circuit, layers)
                    ),
                )
            )
        return schemas.MagnusResponse(
            report=schemas.MagnusReportModel(
                omega1_norm=operator_norm(report.omega1),
                omega2_norm=operator_norm(report.omega2),
                triangle_norms=[operator_norm(t) for t in report.triangles],
                square_norms={
                    f"{pair[0]},{pair[1]}": operator_norm(mat)
                    for pair, mat in report.squares.items()
                },
                decomposition_residual=report.decomposition_residual,
                quadrature_order=report.quadrature_order,
            ),
            rows=rows,
        )

    @app.post("/drift/run", response_model=schemas.DriftResponse)
    async def drift_run(req: schemas.DriftRequest) -> schemas.DriftResponse:
        levels = tuple(range(req.order + 1))
        weights = [float(w) for w in taylor_coefficients(req.order).weights]
        total = req.n_hop * req.rounds * len(levels)
        half = total // 2
        drift = DriftSchedule(
            [
                DriftSegment(half, {"delta": req.delta[0]}),
                DriftSegment(total - half, {"delta": req.delta[1]}),
            ],
            label="abrupt",
        )
        rows = []
        for policy in ("hopping", "sequential"):
            plan = ExecutionPlan(policy, req.n_hop, req.rounds, levels, req.seed)
            for rep in range(req.replicates):
                res = run_plan(
                    over_rotation_survival, drift, plan, weights, replicate=rep
                )
                rows.append(
                    schemas.DriftRow(
                        policy=policy,
                        order=req.order,
                        estimate=res.estimate,
                        stderr=res.stderr,
                        n_hop=req.n_hop,
                        rounds=req.rounds,
                        seed=req.seed,
                        replicate=rep,
                    )
                )
        return schemas.DriftResponse(
            columns=[
                "policy", "order", "estimate", "stderr", "n_hop", "rounds", "seed", "replicate",
            ],
            rows=rows,
        )

    @app.post("/experiments/run", response_model=schemas.ExperimentResponse)
    async def experiments_run(req: schemas.ExperimentRequest) -> schemas.ExperimentResponse:
        config = validate_config(req.config)
        manifest = run_experiment(
            config, out_dir=req.out, seed=req.seed, threads=req.threads
        )
        return schemas.ExperimentResponse(**manifest)

    return app


app = create_app()
