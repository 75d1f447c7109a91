"""Command-line front end: potential files in, CSV/JSON artifacts out.

The CLI is a thin client of the FastAPI service in
:mod:`hillwave.service`.  By default requests run in-process against
the app itself; ``--server http://host:port`` sends the same payloads
to a remote instance instead, so scripted workflows behave identically
either way.

Conventions
-----------
* potentials are JSON files {"cosine": [a0, a1, ...], "sine": [b1, ...]};
* grid flags accept a scalar, a comma list, ``a:b:N`` (N linearly spaced
  points from a to b) or ``a:b:logN`` (N log-spaced points);
* tabular results are CSV with a header row and 17 significant digits,
  losslessly round-tripping doubles; ``kernel`` and ``bloch`` emit JSON
  (nested per-band / per-function payloads); ``verify`` prints a
  pass/fail table;
* identical flags (and seed) produce byte-identical output files;
* exit codes: 0 success, 1 numerical failure, 2 validation failure.

``--threads`` (fallback: the HILLWAVE_THREADS environment variable)
sizes the worker pool used by the decay scan.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .potential import load_potential

EXIT_OK = 0
EXIT_NUMERICAL = 1
EXIT_VALIDATION = 2


class CliError(Exception):
    """Carries the exit code alongside the message."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def parse_grid(text: str) -> list[float]:
    """Scalar, comma list, a:b:N (linear) or a:b:logN (log-spaced)."""
    text = text.strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError("range needs exactly a:b:N")
            a, b = float(parts[0]), float(parts[1])
            count_spec = parts[2].strip()
            if count_spec.lower().startswith("log"):
                n = int(count_spec[3:])
                if n < 1:
                    raise ValueError("point count must be >= 1")
                if a <= 0 or b <= 0:
                    raise ValueError("log spacing needs positive endpoints")
                vals = np.geomspace(a, b, n)
            else:
                n = int(count_spec)
                if n < 1:
                    raise ValueError("point count must be >= 1")
                vals = np.linspace(a, b, n)
            return [float(v) for v in vals]
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, f"bad grid {text!r}: {exc}")


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _json_text(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class RunConfig:
    """Validated per-invocation parameters (one subcommand's worth)."""

    potential_path: str
    subcommand: str
    n_max: int
    n_bands: int
    tol: float
    t_grid: list
    x_grid: list
    y_grid: list
    w: float | None
    e_grid: list
    center: float
    width: float
    samples: int
    x_points: int
    seed: int
    threads: int
    output_path: str | None
    server: str | None

    def validate(self):
        if self.tol <= 0:
            raise CliError(EXIT_VALIDATION, "tolerance must be positive")
        if self.n_max < 1 or self.n_bands < 1:
            raise CliError(EXIT_VALIDATION, "band counts must be >= 1")
        if self.threads < 1:
            raise CliError(EXIT_VALIDATION, "--threads must be >= 1")
        for name, grid in (
            ("--t", self.t_grid),
            ("--x", self.x_grid),
            ("--y", self.y_grid),
            ("--e", self.e_grid),
        ):
            if grid is not None and len(grid) == 0:
                raise CliError(EXIT_VALIDATION, f"{name} grid is empty")


def _resolve_threads(value) -> int:
    if value is not None:
        return value
    env = os.environ.get("HILLWAVE_THREADS", "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            raise CliError(EXIT_VALIDATION, f"bad HILLWAVE_THREADS value {env!r}")
    return 1


def _config(args) -> RunConfig:
    grid = lambda v: None if v is None else parse_grid(v)
    cfg = RunConfig(
        potential_path=args.potential,
        subcommand=args.subcommand,
        n_max=getattr(args, "n_max", 12),
        n_bands=getattr(args, "bands", 12),
        tol=getattr(args, "tol", 1e-8),
        t_grid=grid(getattr(args, "t", None)),
        x_grid=grid(getattr(args, "x", None)),
        y_grid=grid(getattr(args, "y", None)),
        w=getattr(args, "w", None),
        e_grid=grid(getattr(args, "e", None)),
        center=getattr(args, "center", 0.5),
        width=getattr(args, "width", 0.35),
        samples=getattr(args, "samples", 33),
        x_points=getattr(args, "x_points", 256),
        seed=getattr(args, "seed", 0),
        threads=_resolve_threads(getattr(args, "threads", None)),
        output_path=args.output,
        server=args.server,
    )
    cfg.validate()
    return cfg


def _potential_payload(cfg: RunConfig) -> dict:
    try:
        pot = load_potential(cfg.potential_path)
    except OSError as exc:
        raise CliError(EXIT_VALIDATION, f"cannot read potential: {exc}")
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_VALIDATION, f"bad potential file: {exc}")
    return {
        "cosine": [float(v) for v in pot.cosine_coeffs],
        "sine": [float(v) for v in pot.sine_coeffs],
    }


def _scalar(cfg: RunConfig, grid, flag: str) -> float:
    if grid is None:
        raise CliError(EXIT_VALIDATION, f"{flag} is required")
    if len(grid) != 1:
        raise CliError(EXIT_VALIDATION, f"{flag} must be a single value here")
    return grid[0]


class Client:
    """POSTs to the in-process app, or to --server when given."""

    def __init__(self, server: str | None):
        if server is None:
            import warnings

            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DeprecationWarning)
                from fastapi.testclient import TestClient

            from .service import app

            self._client = TestClient(app, raise_server_exceptions=False)
        else:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)

    def post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._client.post(path, json=payload)
        except Exception as exc:
            raise CliError(EXIT_NUMERICAL, f"request failed: {exc}")
        if resp.status_code == 200:
            return resp.json()
        try:
            detail = resp.json().get("detail", resp.text)
        except Exception:
            detail = resp.text
        if resp.status_code == 422:
            raise CliError(EXIT_VALIDATION, f"validation failure: {detail}")
        raise CliError(EXIT_NUMERICAL, f"numerical failure ({resp.status_code}): {detail}")

    def close(self):
        self._client.close()


# ---------------------------------------------------------------------------
# subcommand handlers: build payload, post, format


def _run_spectrum(cfg, client):
    data = client.post(
        "/spectrum", {"potential": _potential_payload(cfg), "n_max": cfg.n_max}
    )
    rows = []
    for band in data["bands"]:
        n = band["n"]
        edge = data["edges"][n]
        rows.append(
            (
                n,
                band["w_left"],
                band["w_right"],
                band["e_left"],
                band["e_right"],
                edge["gap_length"],
                edge["slit_height"],
            )
        )
    header = ["n", "w_left", "w_right", "e_left", "e_right",
              "gap_below", "slit_height_below"]
    return _csv(header, rows)


def _run_discriminant(cfg, client):
    if cfg.e_grid is None:
        raise CliError(EXIT_VALIDATION, "--e is required")
    data = client.post(
        "/discriminant",
        {"potential": _potential_payload(cfg), "e_values": cfg.e_grid},
    )
    rows = zip(data["e"], data["d"], data["d_de"])
    return _csv(["e", "d", "d_de"], rows)


def _run_bands(cfg, client):
    data = client.post(
        "/bands",
        {
            "potential": _potential_payload(cfg),
            "n_max": cfg.n_max,
            "samples_per_band": cfg.samples,
        },
    )
    rows = []
    for band in data["bands"]:
        for i in range(len(band["k"])):
            rows.append(
                (
                    band["n"],
                    band["k"][i],
                    band["w"][i],
                    band["e"][i],
                    band["e_dot"][i],
                    band["e_ddot"][i],
                    band["e_dddot"][i],
                )
            )
    return _csv(["n", "k", "w", "e", "e_dot", "e_ddot", "e_dddot"], rows)


def _run_bloch(cfg, client):
    if cfg.w is None:
        raise CliError(EXIT_VALIDATION, "--w is required")
    data = client.post(
        "/bloch",
        {
            "potential": _potential_payload(cfg),
            "n_max": cfg.n_max,
            "w": cfg.w,
            "x_points": cfg.x_points,
        },
    )
    return _json_text(data)


def _run_kernel(cfg, client):
    data = client.post(
        "/kernel",
        {
            "potential": _potential_payload(cfg),
            "n_max": cfg.n_max,
            "t": _scalar(cfg, cfg.t_grid, "--t"),
            "x": _scalar(cfg, cfg.x_grid, "--x"),
            "y": _scalar(cfg, cfg.y_grid, "--y"),
            "n_bands": cfg.n_bands,
            "tol": cfg.tol,
        },
    )
    return _json_text(data)


def _run_evolve(cfg, client):
    if cfg.x_grid is None:
        raise CliError(EXIT_VALIDATION, "--x is required")
    data = client.post(
        "/evolve",
        {
            "potential": _potential_payload(cfg),
            "n_max": cfg.n_max,
            "t": _scalar(cfg, cfg.t_grid, "--t"),
            "x_values": cfg.x_grid,
            "center": cfg.center,
            "width": cfg.width,
            "n_bands": cfg.n_bands,
        },
    )
    rows = [(x, u[0], u[1]) for x, u in zip(data["x"], data["u"])]
    return _csv(["x", "u_re", "u_im"], rows)


def _run_decay(cfg, client):
    if cfg.t_grid is None:
        raise CliError(EXIT_VALIDATION, "--t is required")
    data = client.post(
        "/decay",
        {
            "potential": _potential_payload(cfg),
            "n_max": cfg.n_max,
            "t_values": cfg.t_grid,
            "n_bands": cfg.n_bands,
            "tol": cfg.tol,
            "threads": cfg.threads,
        },
    )
    rows = zip(data["t"], data["sup_abs"], data["ratio"])
    return _csv(["t", "sup_abs", "ratio"], rows)


def _run_verify(cfg, client):
    data = client.post(
        "/verify",
        {
            "potential": _potential_payload(cfg),
            "n_max": cfg.n_max,
            "seed": cfg.seed,
            "samples": cfg.samples,
        },
    )
    width = max(len(c["name"]) for c in data["checks"])
    lines = [f"{'check'.ljust(width)}  {'residual':>12}  {'tol':>9}  status"]
    for c in data["checks"]:
        status = "pass" if c["passed"] else "FAIL"
        lines.append(
            f"{c['name'].ljust(width)}  {c['residual']:12.4e}  {c['tol']:9.0e}  {status}"
        )
    lines.append(f"overall: {'PASS' if data['passed'] else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    return text, (EXIT_OK if data["passed"] else EXIT_NUMERICAL)


_HANDLERS = {
    "spectrum": _run_spectrum,
    "discriminant": _run_discriminant,
    "bands": _run_bands,
    "bloch": _run_bloch,
    "kernel": _run_kernel,
    "evolve": _run_evolve,
    "decay": _run_decay,
    "verify": _run_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hillwave",
        description="Band structure, Bloch waves and propagator kernels "
        "of -d^2/dx^2 + P(x) with period-1 P.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--potential", required=True,
                       help='JSON file {"cosine": [...], "sine": [...]}')
        p.add_argument("--output", default=None, help="write here instead of stdout")
        p.add_argument("--server", default=None,
                       help="base URL of a running service (default: in-process)")

    p = sub.add_parser("spectrum", help="band edges and gaps as CSV")
    common(p)
    p.add_argument("--n-max", dest="n_max", type=int, default=12)

    p = sub.add_parser("discriminant", help="D(E) and dD/dE on an energy grid")
    common(p)
    p.add_argument("--e", required=True,
                   help="energy grid (scalar, list or a:b:N); "
                   "write --e=-2:10:25 when the start is negative")

    p = sub.add_parser("bands", help="E(k) and derivatives per band as CSV")
    common(p)
    p.add_argument("--n-max", dest="n_max", type=int, default=12)
    p.add_argument("--samples", type=int, default=33, help="k samples per band")

    p = sub.add_parser("bloch", help="Bloch pair at one energy as JSON")
    common(p)
    p.add_argument("--n-max", dest="n_max", type=int, default=12)
    p.add_argument("--w", type=float, required=True, help="sqrt(E - E_min), in a band")
    p.add_argument("--x-points", dest="x_points", type=int, default=256)

    p = sub.add_parser("kernel", help="propagator kernel K(t,x,y) as JSON")
    common(p)
    p.add_argument("--n-max", dest="n_max", type=int, default=14)
    p.add_argument("--t", required=True)
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--bands", type=int, default=12, help="bands kept explicitly")
    p.add_argument("--tol", type=float, default=1e-8)

    p = sub.add_parser("evolve", help="e^{itH} of a Gaussian, sampled on --x")
    common(p)
    p.add_argument("--n-max", dest="n_max", type=int, default=14)
    p.add_argument("--t", required=True)
    p.add_argument("--x", required=True, help="output grid (scalar, list or a:b:N)")
    p.add_argument("--center", type=float, default=0.5)
    p.add_argument("--width", type=float, default=0.35)
    p.add_argument("--bands", type=int, default=12)

    p = sub.add_parser("decay", help="sup|K| vs max(t^-1/2, t^-1/3) as CSV")
    common(p)
    p.add_argument("--n-max", dest="n_max", type=int, default=14)
    p.add_argument("--t", required=True, help="time grid, e.g. 1:64:log16")
    p.add_argument("--bands", type=int, default=12)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--threads", type=int, default=None,
                   help="worker pool size (default: HILLWAVE_THREADS or 1)")

    p = sub.add_parser("verify", help="identity suite with a pass/fail table")
    common(p)
    p.add_argument("--n-max", dest="n_max", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=24)

    return parser


def run(cfg: RunConfig):
    """(output text, exit code) for one validated configuration."""
    client = Client(cfg.server)
    try:
        out = _HANDLERS[cfg.subcommand](cfg, client)
    finally:
        client.close()
    return out if isinstance(out, tuple) else (out, EXIT_OK)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exit: 2 on bad flags, 0 on --help
        return int(exc.code or 0)
    try:
        cfg = _config(args)
        text, code = run(cfg)
    except CliError as exc:
        sys.stderr.write(f"hillwave: {exc}\n")
        return exc.code
    if cfg.output_path is not None:
        Path(cfg.output_path).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
