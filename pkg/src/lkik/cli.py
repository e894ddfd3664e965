"""Command-line interface.

Every subcommand is a thin client over the HTTP service: by default requests
are dispatched to an in-process application instance, and ``--server URL``
(or ``LKIK_SERVER``) points them at a remote one instead.  Success prints to
stdout and exits 0; failures print one machine-readable JSON object
(``{"error", "message", "pointer"}``) to stderr and exit 2 for invalid
input or 3 for runtime/connection failures.
"""

from __future__ import annotations

import contextlib
import json
import pathlib
import sys
import warnings

import click
import httpx

EXIT_INVALID = 2
EXIT_RUNTIME = 3
_DEFAULT_LAYER_COUNTS = "1,2,4,8,16"


def _fail(code: int, error: str, message: str, pointer: str | None = None) -> None:
    payload = {"error": error, "message": message, "pointer": pointer}
    click.echo(json.dumps(payload), err=True)
    sys.exit(code)


@contextlib.contextmanager
def _client(server: str | None):
    """Yield an httpx-compatible client bound to the service."""
    if server is not None:
        with httpx.Client(base_url=server, timeout=600.0) as client:
            yield client
        return
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

        from .service import app
    with TestClient(app, raise_server_exceptions=False) as client:
        yield client


def _post(server: str | None, path: str, payload: dict) -> dict:
    """POST to the service, mapping HTTP failures to exit codes."""
    try:
        with _client(server) as client:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                response = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        _fail(EXIT_RUNTIME, type(exc).__name__, str(exc))
    body = response.json()
    if response.status_code != 200:
        code = EXIT_INVALID if response.status_code == 400 else EXIT_RUNTIME
        _fail(
            code,
            body.get("error", "HTTPError"),
            body.get("message", f"status {response.status_code}"),
            body.get("pointer"),
        )
    return body


def _load_json_file(path: str, *, what: str) -> dict:
    file = pathlib.Path(path)
    try:
        text = file.read_text()
    except OSError as exc:
        _fail(EXIT_INVALID, "FileNotFoundError", f"cannot read {what} file: {exc}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        _fail(EXIT_INVALID, "JSONDecodeError", f"{what} file {path}: {exc}")
    if not isinstance(data, dict):
        _fail(EXIT_INVALID, "TypeError", f"{what} file {path} must hold a JSON object")
    return data


def _csv_cell(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def _print_csv(columns: list[str], rows: list[list]) -> None:
    click.echo(",".join(columns))
    for row in rows:
        click.echo(",".join(_csv_cell(cell) for cell in row))


@click.group()
@click.option(
    "--server",
    envvar="LKIK_SERVER",
    default=None,
    metavar="URL",
    help="Base URL of a running service; omit to run in-process.",
)
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Noisy-circuit simulation and inverse-map error mitigation."""
    ctx.obj = server


@main.command()
@click.argument("config", metavar="CONFIG_JSON")
@click.option("--out", default=None, metavar="DIR", help="Output directory override.")
@click.option("--seed", default=None, type=int, help="Seed override (shot-mode experiments).")
@click.option("--threads", default=1, type=int, show_default=True, help="Worker threads.")
@click.pass_obj
def run(server: str | None, config: str, out: str | None, seed: int | None, threads: int) -> None:
    """Run one experiment config; print its output manifest as JSON."""
    data = _load_json_file(config, what="config")
    circuit = data.get("circuit")
    if isinstance(circuit, str) and not pathlib.Path(circuit).is_absolute():
        data["circuit"] = str((pathlib.Path(config).parent / circuit).resolve())
    payload: dict = {"config": data, "threads": threads}
    if out is not None:
        payload["out"] = out
    if seed is not None:
        payload["seed"] = seed
    manifest = _post(server, "/experiments/run", payload)
    click.echo(json.dumps(manifest, indent=2, sort_keys=True))


@main.command()
@click.option("--taylor", default=None, type=int, metavar="M", help="Closed-form weights of order M.")
@click.option(
    "--adaptive",
    default=None,
    nargs=2,
    type=(int, float),
    metavar="M G",
    help="Window-fitted weights of order M on [g, 1].",
)
@click.option(
    "--mve",
    default=None,
    nargs=2,
    type=(int, int),
    metavar="L ORDER",
    help="Multivariate weights for L layers.",
)
@click.pass_obj
def coeffs(server, taylor, adaptive, mve) -> None:
    """Print one weight family as CSV (index, weight, amplification-vector, gamma, gamma2)."""
    chosen = [opt for opt in (taylor, adaptive, mve) if opt is not None]
    if len(chosen) != 1:
        _fail(
            EXIT_INVALID,
            "UsageError",
            "pass exactly one of --taylor M, --adaptive M G, --mve L ORDER",
        )
    if taylor is not None:
        payload = {"family": "taylor", "order": taylor}
    elif adaptive is not None:
        payload = {"family": "adaptive", "order": adaptive[0], "g": adaptive[1]}
    else:
        payload = {"family": "mve", "layers": mve[0], "order": mve[1]}
    body = _post(server, "/coefficients", payload)
    rows = [
        [
            entry["index"],
            entry["weight"],
            "|".join(str(f) for f in entry["amplification"]),
            body["gamma"],
            body["gamma_sq"],
        ]
        for entry in body["entries"]
    ]
    _print_csv(["index", "weight", "amplification-vector", "gamma", "gamma2"], rows)


@main.command()
@click.argument("circuit", metavar="CIRCUIT_JSON")
@click.option(
    "--layers",
    default=_DEFAULT_LAYER_COUNTS,
    show_default=True,
    metavar="L1,L2,...",
    help="Comma-separated layer counts for the bias table.",
)
@click.option("--quadrature", default=None, type=int, help="Quadrature nodes per segment.")
@click.option(
    "--out",
    default="results/magnus",
    show_default=True,
    metavar="DIR",
    help="Directory for the bias-table CSV.",
)
@click.pass_obj
def magnus(server, circuit: str, layers: str, quadrature: int | None, out: str) -> None:
    """Print the second-order noise-term report as JSON; write the bias table CSV."""
    data = _load_json_file(circuit, what="circuit")
    try:
        counts = [int(part) for part in layers.split(",") if part.strip()]
    except ValueError:
        _fail(EXIT_INVALID, "UsageError", f"--layers must be comma-separated integers, got {layers!r}")
    if not counts:
        _fail(EXIT_INVALID, "UsageError", "--layers needs at least one layer count")
    payload: dict = {"circuit": data, "layer_counts": counts}
    if quadrature is not None:
        payload["quadrature"] = quadrature
    body = _post(server, "/magnus/report", payload)
    click.echo(json.dumps(body["report"], indent=2, sort_keys=True))
    out_dir = pathlib.Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = ["L,measured_bias,bound,thin_layer_prediction"]
    for row in body["rows"]:
        lines.append(
            ",".join(
                _csv_cell(cell)
                for cell in (
                    row["layers"],
                    row["measured_bias"],
                    row["bound"],
                    row["thin_layer_prediction"],
                )
            )
        )
    (out_dir / "magnus.csv").write_text("\n".join(lines) + "\n")


@main.command()
@click.option(
    "--delta",
    default=(0.08, 0.16),
    nargs=2,
    type=float,
    show_default=True,
    help="Over-rotation angle before and after the abrupt drift.",
)
@click.option("--order", default=2, type=int, show_default=True)
@click.option("--n-hop", default=20, type=int, show_default=True, help="Shots per level per round.")
@click.option("--rounds", default=3500, type=int, show_default=True)
@click.option("--seed", default=20260823, type=int, show_default=True)
@click.option("--replicates", default=1, type=int, show_default=True)
@click.pass_obj
def drift(server, delta, order, n_hop, rounds, seed, replicates) -> None:
    """Compare execution orders under drift; print CSV (policy, order, estimate, stderr, n_hop, rounds, seed)."""
    body = _post(
        server,
        "/drift/run",
        {
            "delta": list(delta),
            "order": order,
            "n_hop": n_hop,
            "rounds": rounds,
            "seed": seed,
            "replicates": replicates,
        },
    )
    columns = ["policy", "order", "estimate", "stderr", "n_hop", "rounds", "seed"]
    rows = [[row[col] for col in columns] for row in body["rows"]]
    _print_csv(columns, rows)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, type=int, show_default=True)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("lkik.service.app:app", host=host, port=port)


if __name__ == "__main__":
    main()
