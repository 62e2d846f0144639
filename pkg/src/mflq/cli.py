"""Command-line front end: validate, solve, turnpike, simulate.

Exit codes are stable and scripts may rely on them:

    0   success
    2   validation failure (hypothesis check failed, bad model data)
    3   parse failure (problem or config file is not readable JSON)
    4   solver failure (no stabilizing solution, certification failed)
    5   usage error (bad flags, missing parameters, overwrite refused)

On any failure the last stdout line is a one-line JSON error object
(shipped schema: docs/schemas/error.schema.json) and a human-readable
message goes to stderr.

Every command confines its writes to --output-dir and refuses to
overwrite existing files unless --force is given. All numeric
parameters can also be supplied through a JSON config file (--config);
explicit flags win over config values, which win over built-in
defaults. Floats in all outputs carry 17 significant digits, so reruns
are byte-identical and re-parses are exact.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys

import numpy as np

from . import serialize
from .errors import (
    ModelDataError,
    ProblemFormatError,
    SolverError,
    ValidationFailure,
)
from .mfsim import ClosedLoopSpec, estimate_cost, simulate
from .model import validate_h1
from .riccati_ergodic import solve_ergodic_system
from .riccati_finite import default_steps, integrate_riccati_system
from .turnpike_lab import (
    TurnpikeReport,
    cesaro_convergence,
    gain_convergence,
    pair_deviation,
    report_to_dict,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PARSE = 3
EXIT_SOLVER = 4
EXIT_USAGE = 5

#: Default RNG seed for ``simulate``: fixed so that runs are reproducible
#: unless the user asks for something else.
DEFAULT_SEED = 1729

_CONFIG_KEYS = {
    "problem", "output_dir", "force", "format", "mode", "T", "steps", "tol",
    "x0", "x0_finite", "x0_erg", "horizons", "paths", "seed", "substeps",
    "workers", "particle", "summary_only",
}


class UsageError(Exception):
    """Bad command usage discovered after argparse (exit code 5)."""


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here says 5."""

    def error(self, message):
        print(json.dumps({"error": {"type": "UsageError", "message": message,
                                    "exit_code": EXIT_USAGE}}))
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fail(exc: Exception, code: int) -> int:
    print(json.dumps(serialize.error_doc(exc, code)))
    print(f"error: {exc}", file=sys.stderr)
    return code


def _get(args, config, key, default=None):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _require(args, config, key, flag):
    value = _get(args, config, key)
    if value is None:
        raise UsageError(f"{flag} is required")
    return value


def _parse_vector(value, flag, dim) -> np.ndarray:
    if isinstance(value, (list, tuple)):
        try:
            vals = [float(v) for v in value]
        except (TypeError, ValueError):
            raise UsageError(f"{flag} expects numbers, got {value!r}") from None
    else:
        try:
            vals = [float(tok) for tok in str(value).split(",") if tok.strip()]
        except ValueError:
            raise UsageError(
                f"{flag} expects comma-separated numbers, got {value!r}"
            ) from None
    if len(vals) != dim:
        raise UsageError(f"{flag} must have dimension {dim}, got {len(vals)}")
    return np.array(vals)


def _parse_horizons(value) -> list[float]:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    try:
        return [float(tok) for tok in str(value).split(",") if tok.strip()]
    except ValueError:
        raise UsageError(
            f"--horizons expects comma-separated numbers, got {value!r}"
        ) from None


def _positive_int(args, config, key, flag, default):
    value = _get(args, config, key, default)
    value = int(value)
    if value < 1:
        raise UsageError(f"{flag} must be a positive integer, got {value}")
    return value


def _flatten(value, prefix: str, rows: list) -> None:
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(v, f"{prefix}.{k}" if prefix else str(k), rows)
    elif isinstance(value, (list, tuple)):
        for i, v in enumerate(value):
            _flatten(v, f"{prefix}[{i}]", rows)
    elif isinstance(value, bool) or value is None:
        rows.append([prefix, json.dumps(value)])
    elif isinstance(value, float):
        rows.append([prefix, serialize.fmt(value)])
    else:
        rows.append([prefix, str(value)])


def _print_summary(doc: dict, fmt_kind: str, text: str) -> None:
    """Render a command's summary to stdout in the chosen format."""
    if fmt_kind == "json":
        sys.stdout.write(serialize.dumps_json(doc))
    elif fmt_kind == "csv":
        rows: list = []
        _flatten(doc, "", rows)
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(["key", "value"])
        writer.writerows(rows)
    else:
        sys.stdout.write(text)


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"config file is not valid JSON: {exc}") from exc
    except OSError as exc:
        raise ProblemFormatError(f"cannot read config file: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProblemFormatError("config file must contain a JSON object")
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    return doc


def _load_model(args, config):
    problem = _require(args, config, "problem", "--problem")
    return serialize.load_problem(problem), problem


def _output_dir(args, config):
    return _require(args, config, "output_dir", "--output-dir")


def _force(args, config) -> bool:
    return bool(_get(args, config, "force", False))


# ---------------------------------------------------------------- validate

def cmd_validate(args, config) -> int:
    model, _ = _load_model(args, config)
    tol = float(_get(args, config, "tol", 1e-10))
    report = validate_h1(model)
    messages = list(report.messages)
    h2_ode_ok = h2_sde_ok = None
    h2_ode_gain = h2_sde_gain = None
    if report.h1_ok:
        try:
            erg = solve_ergodic_system(model, tol=tol)
        except (SolverError, ValidationFailure) as exc:
            h2_ode_ok = h2_sde_ok = False
            messages.append(f"stationary solve failed: {exc}")
        else:
            h2_ode_ok = erg.cert_mean.ok
            h2_sde_ok = erg.cert_ms.ok
            h2_ode_gain = erg.cert_mean.witness_min_eig
            h2_sde_gain = erg.cert_ms.witness_min_eig
            messages.append("mean-drift and mean-square stability certified "
                            "for the stationary feedback")
    report = dataclasses.replace(
        report, messages=tuple(messages), h2_ode_ok=h2_ode_ok,
        h2_sde_ok=h2_sde_ok, h2_ode_gain=h2_ode_gain, h2_sde_gain=h2_sde_gain,
    )
    doc = serialize.validation_doc(report)

    verdict = "PASS" if report.ok else "FAIL"
    text = "\n".join([f"validation: {verdict}"]
                     + [f"  - {msg}" for msg in report.messages]) + "\n"
    _print_summary(doc, _get(args, config, "format", "text"), text)

    out = _get(args, config, "output_dir")
    if out is not None:
        serialize.ensure_output_dir(out, ["validation.json"], _force(args, config))
        serialize.write_json(f"{out}/validation.json", doc)
    return EXIT_OK if report.ok else EXIT_VALIDATION


# ------------------------------------------------------------------- solve

def _validation_gate(model, force: bool):
    report = validate_h1(model)
    if not report.h1_ok and not force:
        raise ValidationFailure("; ".join(report.messages))


def cmd_solve(args, config) -> int:
    model, _ = _load_model(args, config)
    out = _output_dir(args, config)
    force = _force(args, config)
    mode = _get(args, config, "mode", "ergodic")
    tol = float(_get(args, config, "tol", 1e-10))
    _validation_gate(model, force)

    fmt_kind = _get(args, config, "format", "text")
    if mode == "finite":
        T = _get(args, config, "T")
        if T is None:
            raise UsageError("--T is required in finite mode")
        T = float(T)
        steps = _get(args, config, "steps")
        steps = default_steps(T) if steps is None else int(steps)
        sol = integrate_riccati_system(model, T, steps=steps, check=not force)
        files = ["solution.json", "solution.csv", "solution.png"]
        serialize.ensure_output_dir(out, files, force)
        doc = serialize.finite_solution_doc(sol)
        serialize.write_json(f"{out}/solution.json", doc)
        serialize.write_finite_solution_csv(f"{out}/solution.csv", sol)
        from . import figures
        figures.render_finite_solution(f"{out}/solution.png", sol)
        text = (f"finite horizon T={T:g}, {steps} steps; "
                f"gain identity residual "
                f"{sol.diagnostics['gain_identity_residual']:.3e}\n")
        _print_summary(doc, fmt_kind, text)
    else:
        erg = solve_ergodic_system(model, tol=tol)
        serialize.ensure_output_dir(out, ["solution.json"], force)
        doc = serialize.ergodic_solution_doc(erg)
        serialize.write_json(f"{out}/solution.json", doc)
        worst = max(erg.residuals.values())
        text = (f"c0 = {serialize.fmt(erg.c0)}\n"
                f"stationary system solved; worst residual {worst:.3e}\n")
        _print_summary(doc, fmt_kind, text)
    return EXIT_OK


# ---------------------------------------------------------------- turnpike

def cmd_turnpike(args, config) -> int:
    model, _ = _load_model(args, config)
    out = _output_dir(args, config)
    force = _force(args, config)
    T = float(_require(args, config, "T", "--T"))
    tol = float(_get(args, config, "tol", 1e-10))
    steps = _get(args, config, "steps")
    steps = default_steps(T) if steps is None else int(steps)
    n = model.n

    x0f_raw = _get(args, config, "x0_finite")
    x0e_raw = _get(args, config, "x0_erg")
    x0f = (np.ones(n) if x0f_raw is None
           else _parse_vector(x0f_raw, "--x0-finite", n))
    x0e = (np.zeros(n) if x0e_raw is None
           else _parse_vector(x0e_raw, "--x0-erg", n))
    horizons_raw = _get(args, config, "horizons")
    horizons = ([T / 8, T / 4, T / 2, T] if horizons_raw is None
                else _parse_horizons(horizons_raw))

    _validation_gate(model, force)
    erg = solve_ergodic_system(model, tol=tol)
    fin = integrate_riccati_system(model, T, steps=steps)
    gains = gain_convergence(fin, erg)
    pair = pair_deviation(model, fin, erg, x0f, x0e)
    cesaro = cesaro_convergence(model, x0f, horizons, erg=erg)
    report = TurnpikeReport(gains=gains, pair=pair, cesaro=cesaro)

    files = ([f"gap_{name}.csv" for name in gains.gaps]
             + ["state_gap.csv", "control_gap.csv", "cesaro.csv",
                "turnpike_summary.json", "report.txt",
                "turnpike_gaps.png", "cesaro.png"])
    serialize.ensure_output_dir(out, files, force)
    for name, gap in gains.gaps.items():
        serialize.write_series_csv(f"{out}/gap_{name}.csv", gains.grid, gap)
    serialize.write_series_csv(f"{out}/state_gap.csv", pair.grid, pair.state_gap)
    serialize.write_series_csv(f"{out}/control_gap.csv", pair.grid,
                               pair.control_gap)
    serialize.write_csv(
        f"{out}/cesaro.csv",
        ["T", "average", "reference", "gap"],
        ([r.horizon, r.average, r.reference, r.gap] for r in cesaro.rows),
    )
    full_doc = report_to_dict(report)
    serialize.write_json(f"{out}/turnpike_summary.json", full_doc)
    serialize.write_text_report(f"{out}/report.txt", report)
    from . import figures
    figures.render_turnpike(f"{out}/turnpike_gaps.png", report)
    figures.render_cesaro(f"{out}/cesaro.png", cesaro)
    # stdout summary: the fits and the table, not the per-point series
    # (those live in the CSVs next to the summary JSON).
    stdout_doc = {
        "horizon": T,
        "fits": {**{k: v for k, v in full_doc["gains"]["fits"].items()},
                 **{k: v for k, v in full_doc["pair"]["fits"].items()}},
        "cesaro": full_doc["cesaro"],
    }
    _print_summary(stdout_doc, _get(args, config, "format", "text"),
                   serialize.format_text_report(report))
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def cmd_simulate(args, config) -> int:
    model, problem = _load_model(args, config)
    out = _output_dir(args, config)
    force = _force(args, config)
    mode = _get(args, config, "mode", "ergodic")
    T = float(_require(args, config, "T", "--T"))
    tol = float(_get(args, config, "tol", 1e-10))
    paths = _positive_int(args, config, "paths", "--paths", 100)
    substeps = _positive_int(args, config, "substeps", "--substeps", 1)
    workers = _positive_int(args, config, "workers", "--workers", 1)
    seed = int(_get(args, config, "seed", DEFAULT_SEED))
    particle = bool(_get(args, config, "particle", False))
    summary_only = bool(_get(args, config, "summary_only", False))
    steps = _get(args, config, "steps")
    steps = max(100, math.ceil(20 * T)) if steps is None else int(steps)
    if steps < 1:
        raise UsageError(f"--steps must be a positive integer, got {steps}")

    x0_raw = _get(args, config, "x0")
    x0 = np.zeros(model.n) if x0_raw is None else _parse_vector(x0_raw, "--x0",
                                                                model.n)
    _validation_gate(model, force)
    if mode == "finite":
        solution = integrate_riccati_system(model, T, steps=default_steps(T))
    else:
        solution = solve_ergodic_system(model, tol=tol)
    spec = ClosedLoopSpec(model=model, solution=solution, x0=x0)
    grid = np.linspace(0.0, T, steps + 1)
    ens = simulate(spec, grid, paths, seed, substeps=substeps,
                   workers=workers, particle=particle)
    est = estimate_cost(model, ens)

    files = ["metadata.json", "mean_path.csv", "path_costs.csv",
             "simulation.png"]
    if not summary_only:
        files.append("trajectories.csv")
    serialize.ensure_output_dir(out, files, force)
    meta = {
        "command": "simulate",
        "problem": str(problem),
        "mode": mode,
        "T": T,
        "steps": steps,
        "substeps": substeps,
        "paths": paths,
        "seed": seed,
        "workers": workers,
        "particle": particle,
        "x0": x0.tolist(),
        "rng": ens.metadata["rng"],
        "gaussian": ens.metadata["gaussian"],
        "scheme": ens.metadata["scheme"],
        "mean_source": ens.metadata["mean_source"],
        "model_fingerprint": ens.metadata["model_fingerprint"],
        "cost": {"value": est.value, "cesaro": est.cesaro,
                 "stderr": est.stderr},
    }
    serialize.write_json(f"{out}/metadata.json", meta)
    serialize.write_mean_csv(f"{out}/mean_path.csv", ens.grid, ens.mean)
    serialize.write_path_costs_csv(f"{out}/path_costs.csv", model, ens)
    if not summary_only:
        serialize.write_ensemble_csv(f"{out}/trajectories.csv", ens)
    from . import figures
    figures.render_simulation(f"{out}/simulation.png", ens, est.running_mean)
    text = (f"{paths} paths on [0, {T:g}] with {steps} reporting steps "
            f"(substeps {substeps}, seed {seed})\n"
            f"cost estimate {serialize.fmt(est.value)} "
            f"+/- {serialize.fmt(est.stderr)} "
            f"(time average {serialize.fmt(est.cesaro)})\n")
    _print_summary(meta, _get(args, config, "format", "text"), text)
    return EXIT_OK


# -------------------------------------------------------------------- main

def build_parser() -> _Parser:
    parser = _Parser(prog="mflq",
                     description="Mean-field linear-quadratic control: "
                                 "solvers, simulation, turnpike experiments.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    def common(p):
        p.add_argument("--problem", help="problem JSON file")
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--output-dir", help="directory for all outputs")
        p.add_argument("--force", action="store_true", default=None,
                       help="overwrite outputs and skip the validation gate")
        p.add_argument("--tol", type=float,
                       help="stationary solver tolerance (default 1e-10)")
        p.add_argument("--format", choices=["text", "csv", "json"],
                       help="stdout summary rendering (default text)")

    p = sub.add_parser("validate", help="check solvability hypotheses")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve the stationary or finite-horizon "
                                     "optimality system")
    common(p)
    p.add_argument("--mode", choices=["finite", "ergodic"],
                   help="which system to solve (default ergodic)")
    p.add_argument("--T", type=float, help="horizon (finite mode)")
    p.add_argument("--steps", type=int, help="integration steps (finite mode)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("turnpike", help="run the turnpike experiments")
    common(p)
    p.add_argument("--T", type=float, help="horizon for the experiments")
    p.add_argument("--steps", type=int, help="integration steps over [0, T]")
    p.add_argument("--x0-finite", help="start of the finite-horizon process "
                                       "(comma-separated; default all ones)")
    p.add_argument("--x0-erg", help="start of the stationary process "
                                    "(comma-separated; default all zeros)")
    p.add_argument("--horizons", help="comma-separated ladder for the "
                                      "time-average table (default T/8,T/4,T/2,T)")
    p.set_defaults(func=cmd_turnpike)

    p = sub.add_parser("simulate", help="Monte Carlo under the optimal feedback")
    common(p)
    p.add_argument("--mode", choices=["finite", "ergodic"],
                   help="which feedback to simulate (default ergodic)")
    p.add_argument("--T", type=float, help="end of the simulation window")
    p.add_argument("--steps", type=int,
                   help="reporting grid steps (default max(100, 20*T))")
    p.add_argument("--paths", type=int, help="number of paths (default 100)")
    p.add_argument("--seed", type=int,
                   help=f"RNG seed (default {DEFAULT_SEED})")
    p.add_argument("--substeps", type=int,
                   help="integration substeps per reporting step (default 1)")
    p.add_argument("--workers", type=int,
                   help="simulation threads (default 1; results identical)")
    p.add_argument("--x0", help="initial state (comma-separated; default zeros)")
    p.add_argument("--particle", action="store_true", default=None,
                   help="use the empirical mean instead of the mean ODE")
    p.add_argument("--summary-only", action="store_true", default=None,
                   help="skip the per-path trajectory CSV")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config) if args.config else {}
        return args.func(args, config)
    except FileExistsError as exc:
        return _fail(exc, EXIT_USAGE)
    except UsageError as exc:
        return _fail(exc, EXIT_USAGE)
    except ProblemFormatError as exc:
        return _fail(exc, EXIT_PARSE)
    except (ModelDataError, ValidationFailure) as exc:
        return _fail(exc, EXIT_VALIDATION)
    except SolverError as exc:
        return _fail(exc, EXIT_SOLVER)
    except ValueError as exc:
        return _fail(exc, EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
