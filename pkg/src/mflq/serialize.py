"""Problem files, delimited outputs, and exact-precision JSON.

Every float leaving this module is written with 17 significant digits,
which is enough to reconstruct the exact double on re-parse; the
round-trip tests rely on that, and so does the CLI's determinism
contract (byte-identical files for identical invocations).

``json.dumps`` cannot be told how to format floats, so a small emitter
lives here instead. It covers exactly the JSON data model (objects,
arrays, strings, finite numbers, booleans, null) plus numpy arrays and
scalars, which it converts on the way out.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .errors import ProblemFormatError
from .mfsim import MomentPath, TrajectoryEnsemble, path_costs
from .model import MFModel, ValidationReport
from .riccati_ergodic import ErgodicSolution
from .riccati_finite import FiniteHorizonSolution
from .turnpike_lab import TurnpikeReport, report_to_dict


def fmt(x: float) -> str:
    """A float as text, exact on re-parse (17 significant digits)."""
    if not np.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be serialized")
    return format(float(x), ".17g")


def _emit(value, indent: int, out: list):
    pad = "  " * indent
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, np.generic):
        value = value.item()
    if value is None:
        out.append("null")
    elif isinstance(value, bool):
        out.append("true" if value else "false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        out.append(fmt(value))
    elif isinstance(value, str):
        out.append(json.dumps(value))
    elif isinstance(value, dict):
        if not value:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(value.items()):
            if not isinstance(k, str):
                raise TypeError(f"JSON object keys must be strings, got {k!r}")
            out.append(f"{pad}  {json.dumps(k)}: ")
            _emit(v, indent + 1, out)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(value, (list, tuple)):
        if not value:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(value):
            out.append(pad + "  ")
            _emit(v, indent + 1, out)
            out.append(",\n" if i < len(value) - 1 else "\n")
        out.append(pad + "]")
    else:
        raise TypeError(f"cannot serialize {type(value).__name__} to JSON")


def dumps_json(doc) -> str:
    """JSON text with every float at 17 significant digits."""
    out: list = []
    _emit(doc, 0, out)
    out.append("\n")
    return "".join(out)


def write_json(path: str, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_json(doc))


def load_problem(path: str) -> MFModel:
    """Read a problem JSON file into a model.

    Malformed JSON and structural faults both surface as
    :class:`ProblemFormatError`, with the JSON path of the fault when
    one can be named.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"not valid JSON: {exc}") from exc
    except OSError as exc:
        raise ProblemFormatError(f"cannot read problem file: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProblemFormatError("problem file must contain a JSON object")
    return MFModel.from_dict(doc)


def write_problem(path: str, model: MFModel) -> None:
    write_json(path, model.to_dict())


def _mat_headers(name: str, rows: int, cols: int) -> list[str]:
    return [f"{name}_{i}_{j}" for i in range(rows) for j in range(cols)]


def _vec_headers(name: str, dim: int) -> list[str]:
    return [f"{name}_{i}" for i in range(dim)]


def write_csv(path: str, header: list[str], rows) -> None:
    """Delimited output; numeric cells rendered exactly (17g)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([c if isinstance(c, str) else fmt(c) for c in row])


def write_finite_solution_csv(path: str, sol: FiniteHorizonSolution) -> None:
    """One row per grid point: t, P, Pi, P1, p, p1, p0, gains (row-major)."""
    n, m = sol.model.n, sol.model.m
    header = (
        ["t"]
        + _mat_headers("P", n, n) + _mat_headers("Pi", n, n)
        + _mat_headers("P1", n, n)
        + _vec_headers("p", n) + _vec_headers("p1", n) + ["p0"]
        + _mat_headers("Theta", m, n) + _mat_headers("ThetaBar", m, n)
        + _vec_headers("theta", m)
    )

    def rows():
        for k, t in enumerate(sol.grid):
            yield (
                [t]
                + sol.P[k].reshape(-1).tolist()
                + sol.Pi[k].reshape(-1).tolist()
                + sol.P1[k].reshape(-1).tolist()
                + sol.p[k].tolist() + sol.p1[k].tolist() + [sol.p0[k]]
                + sol.Theta[k].reshape(-1).tolist()
                + sol.ThetaBar[k].reshape(-1).tolist()
                + sol.theta[k].tolist()
            )

    write_csv(path, header, rows())


def _certificate_doc(cert) -> dict:
    if cert.ok:
        return {
            "ok": True,
            "kind": cert.kind,
            "witness": np.asarray(cert.witness).tolist(),
            "residual": cert.residual,
            "witness_min_eig": cert.witness_min_eig,
        }
    return {
        "ok": False,
        "kind": cert.kind,
        "reason": cert.reason,
        "witness_min_eig": cert.witness_min_eig,
    }


def ergodic_solution_doc(erg: ErgodicSolution) -> dict:
    """JSON-ready stationary solution with certificates and residuals."""
    return {
        "P": erg.P.tolist(),
        "Pi": erg.Pi.tolist(),
        "P1": erg.P1.tolist(),
        "p": erg.p.tolist(),
        "p1": erg.p1.tolist(),
        "c0": erg.c0,
        "Theta": erg.Theta.tolist(),
        "ThetaBar": erg.ThetaBar.tolist(),
        "theta": erg.theta.tolist(),
        "certificates": {
            "mean_drift": _certificate_doc(erg.cert_mean),
            "mean_square": _certificate_doc(erg.cert_ms),
        },
        "residuals": dict(erg.residuals),
    }


def finite_solution_doc(sol: FiniteHorizonSolution) -> dict:
    """Initial-time summary of a finite-horizon solution (full data: CSV)."""
    return {
        "T": sol.T,
        "steps": len(sol.grid) - 1,
        "P0": sol.P[0].tolist(),
        "Pi0": sol.Pi[0].tolist(),
        "P1_0": sol.P1[0].tolist(),
        "p0_vec": sol.p[0].tolist(),
        "p1_0": sol.p1[0].tolist(),
        "constant": sol.p0[0],
        "Theta0": sol.Theta[0].tolist(),
        "ThetaBar0": sol.ThetaBar[0].tolist(),
        "theta0": sol.theta[0].tolist(),
        "diagnostics": dict(sol.diagnostics),
    }


def _finite_or_none(x):
    if x is None or not np.isfinite(x):
        return None
    return float(x)


def validation_doc(report: ValidationReport) -> dict:
    # Failed checks can carry NaN eigenvalues (nothing was computable);
    # JSON has no NaN, so those become null.
    return {
        "ok": report.ok,
        "h1_ok": report.h1_ok,
        "h1_min_eigs": {
            "state_weight": _finite_or_none(report.h1_min_eigs[0]),
            "mean_weight": _finite_or_none(report.h1_min_eigs[1]),
        },
        "control_weight_min_eig": _finite_or_none(report.r_min_eig),
        "h2_ode_ok": report.h2_ode_ok,
        "h2_sde_ok": report.h2_sde_ok,
        "h2_ode_gain": _finite_or_none(report.h2_ode_gain),
        "h2_sde_gain": _finite_or_none(report.h2_sde_gain),
        "messages": list(report.messages),
    }


def write_mean_csv(path: str, grid: np.ndarray, mean: np.ndarray,
                   name: str = "mean") -> None:
    d = mean.shape[1]
    header = ["t"] + _vec_headers(name, d)
    rows = ([grid[k]] + mean[k].tolist() for k in range(len(grid)))
    write_csv(path, header, rows)


def write_moments_csv(path: str, mp: MomentPath) -> None:
    """t, mean components, second-moment entries (row-major)."""
    d = mp.mean.shape[1]
    header = ["t"] + _vec_headers("mean", d) + _mat_headers("second", d, d)
    rows = (
        [mp.grid[k]] + mp.mean[k].tolist() + mp.second[k].reshape(-1).tolist()
        for k in range(len(mp.grid))
    )
    write_csv(path, header, rows)


def write_series_csv(path: str, t: np.ndarray, values: np.ndarray) -> None:
    """Two columns (t, value): one gap series, gnuplot-friendly."""
    write_csv(path, ["t", "value"], ([a, b] for a, b in zip(t, values)))


def write_ensemble_csv(path: str, ens: TrajectoryEnsemble) -> None:
    """Long-format trajectories: one row per (path, grid point)."""
    d = ens.states.shape[2]
    c = ens.controls.shape[2]
    header = ["path", "t"] + _vec_headers("x", d) + _vec_headers("u", c)

    def rows():
        for p in range(ens.paths):
            for k, t in enumerate(ens.grid):
                yield ([str(p), fmt(t)]
                       + [fmt(v) for v in ens.states[p, k]]
                       + [fmt(v) for v in ens.controls[p, k]])

    write_csv(path, header, rows())


def write_path_costs_csv(path: str, model: MFModel,
                         ens: TrajectoryEnsemble) -> None:
    """Per-path cost totals and time averages (path, total, cesaro)."""
    totals = path_costs(model, ens)
    span = float(ens.grid[-1] - ens.grid[0])
    rows = ([str(p), fmt(totals[p]), fmt(totals[p] / span)]
            for p in range(ens.paths))
    write_csv(path, ["path", "total", "cesaro"], rows)


def _fit_lines(fits: dict) -> list[str]:
    lines = []
    for name, f in fits.items():
        if not f.ok:
            lines.append(f"  {name:<10} refused: {f.reason}")
        elif hasattr(f, "rate_terminal"):
            lines.append(
                f"  {name:<10} amplitude {f.amplitude:.6g}, rates "
                f"{f.rate_initial:.6g} (departure) / {f.rate_terminal:.6g} "
                f"(arrival), R^2 {f.r2:.4f}"
            )
        else:
            lines.append(
                f"  {name:<10} amplitude {f.amplitude:.6g}, rate "
                f"{f.rate:.6g}, R^2 {f.r2:.4f}"
            )
    return lines


def format_text_report(report: TurnpikeReport) -> str:
    """Plain-text rendering of a turnpike report."""
    lines = ["Turnpike report", "==============="]
    g = report.gains
    lines.append("")
    lines.append(f"Gain convergence (horizon T={g.horizon:g}, "
                 f"fit window t <= {0.8 * g.horizon:g} against T-t):")
    lines.extend(_fit_lines(g.fits))
    if report.pair is not None:
        pr = report.pair
        lines.append("")
        lines.append("Coupled-pair deviation (two-sided fits):")
        lines.extend(_fit_lines(pr.fits))
        f = pr.fits.get("state")
        if f is not None and f.ok:
            lines.append(
                f"  state gap at T/2: {f.midpoint_value:.6g} "
                f"(fit predicts {f.midpoint_prediction:.6g}); "
                f"layer widths {f.layer_initial:.4g} / {f.layer_terminal:.4g}"
            )
    if report.cesaro is not None:
        ces = report.cesaro
        lines.append("")
        lines.append(f"Time-averaged value vs ergodic constant "
                     f"{ces.reference:.12g}:")
        lines.append(f"  {'T':>8}  {'V_T/T':>22}  {'gap':>12}  {'T*gap':>12}")
        for row in ces.rows:
            lines.append(f"  {row.horizon:>8g}  {row.average:>22.15g}  "
                         f"{row.gap:>12.6g}  {row.horizon * row.gap:>12.6g}")
        if ces.bounded is not None:
            verdict = "bounded" if ces.bounded else "NOT bounded"
            lines.append(f"  T*gap across the ladder: {verdict}")
        if ces.extrapolated is not None:
            lines.append(f"  extrapolated limit: {ces.extrapolated:.12g}")
    lines.append("")
    return "\n".join(lines)


def write_text_report(path: str, report: TurnpikeReport) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_text_report(report))


def write_turnpike_summary(path: str, report: TurnpikeReport) -> None:
    write_json(path, report_to_dict(report))


def error_doc(exc: Exception, exit_code: int) -> dict:
    """Machine-readable error payload for the CLI."""
    doc = {
        "error": {
            "type": type(exc).__name__,
            "message": str(exc),
            "exit_code": exit_code,
        }
    }
    extra = getattr(exc, "path", None)
    if extra is not None:
        doc["error"]["path"] = extra
    field = getattr(exc, "field", None)
    if field is not None:
        doc["error"]["field"] = field
    return doc


def ensure_output_dir(directory: str, filenames: list[str], force: bool) -> None:
    """Create the output directory; refuse to overwrite without force."""
    os.makedirs(directory, exist_ok=True)
    if force:
        return
    clashes = [f for f in filenames if os.path.exists(os.path.join(directory, f))]
    if clashes:
        raise FileExistsError(
            f"refusing to overwrite {', '.join(sorted(clashes))} in "
            f"{directory!r} (pass --force to allow)"
        )


__all__ = [
    "dumps_json",
    "ensure_output_dir",
    "ergodic_solution_doc",
    "error_doc",
    "finite_solution_doc",
    "fmt",
    "format_text_report",
    "load_problem",
    "validation_doc",
    "write_csv",
    "write_ensemble_csv",
    "write_finite_solution_csv",
    "write_json",
    "write_mean_csv",
    "write_moments_csv",
    "write_path_costs_csv",
    "write_problem",
    "write_series_csv",
    "write_text_report",
    "write_turnpike_summary",
]
