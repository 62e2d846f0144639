"""Problem files, exact-precision JSON, and delimited outputs."""

from __future__ import annotations

import csv
import json

import numpy as np
import pytest

from mflq import (
    ClosedLoopSpec,
    ProblemFormatError,
    integrate_riccati_system,
    propagate_moments,
    simulate,
    validate_h1,
)
from mflq.serialize import (
    dumps_json,
    ensure_output_dir,
    ergodic_solution_doc,
    error_doc,
    finite_solution_doc,
    fmt,
    format_text_report,
    load_problem,
    validation_doc,
    write_csv,
    write_ensemble_csv,
    write_finite_solution_csv,
    write_moments_csv,
    write_problem,
    write_series_csv,
)
from conftest import scalar_model


# ----------------------------------------------------------- float fidelity


def test_fmt_round_trips_doubles_exactly():
    rng = np.random.default_rng(7)
    samples = np.concatenate([
        rng.standard_normal(200),
        rng.standard_normal(50) * 1e-300,
        rng.standard_normal(50) * 1e300,
        [0.0, 1.0, -1.0, 2.0 ** -1074, np.pi],
    ])
    for x in samples:
        assert float(fmt(float(x))) == float(x)


def test_fmt_rejects_non_finite():
    for bad in (float("nan"), float("inf"), float("-inf")):
        with pytest.raises(ValueError):
            fmt(bad)


def test_dumps_json_is_valid_and_exact():
    doc = {
        "a": 1.0 / 3.0,
        "b": [1, 2.5, None, True, False],
        "c": {"nested": np.array([[0.1, 0.2]])},
        "d": np.float64(0.3),
        "empty_obj": {},
        "empty_arr": [],
        "text": "line\n\"quoted\"",
    }
    text = dumps_json(doc)
    back = json.loads(text)
    assert back["a"] == 1.0 / 3.0
    assert back["c"]["nested"][0][1] == 0.2
    assert back["d"] == 0.3
    assert back["b"] == [1, 2.5, None, True, False]
    assert back["text"] == "line\n\"quoted\""
    assert text.endswith("\n")
    # Identical input, identical bytes.
    assert dumps_json(doc) == text


def test_dumps_json_rejects_foreign_types():
    with pytest.raises(TypeError):
        dumps_json({"x": object()})
    with pytest.raises(TypeError):
        dumps_json({1: "non-string key"})


# ------------------------------------------------------------ problem files


def test_problem_file_round_trip(tmp_path, noise_bench):
    path = tmp_path / "problem.json"
    write_problem(str(path), noise_bench)
    again = load_problem(str(path))
    assert again.fingerprint == noise_bench.fingerprint


def test_load_problem_rejects_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ProblemFormatError, match="not valid JSON"):
        load_problem(str(path))


def test_load_problem_rejects_non_object_root(tmp_path):
    path = tmp_path / "arr.json"
    path.write_text("[1, 2, 3]\n", encoding="utf-8")
    with pytest.raises(ProblemFormatError, match="object"):
        load_problem(str(path))


def test_load_problem_missing_file(tmp_path):
    with pytest.raises(ProblemFormatError, match="cannot read"):
        load_problem(str(tmp_path / "absent.json"))


def test_load_problem_reports_json_path_of_fault(tmp_path, noise_bench):
    doc = noise_bench.to_dict()
    doc["Q"] = [[1.0, 0.0]]  # not square
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(ProblemFormatError) as err:
        load_problem(str(path))
    assert "$.Q" in str(err.value) or err.value.path == "$.Q"


# --------------------------------------------------------- delimited output


def test_write_csv_exact_and_deterministic(tmp_path):
    header = ["t", "value"]
    rows = [[0.1, 1.0 / 3.0], [0.2, np.e]]
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    write_csv(str(a), header, rows)
    write_csv(str(b), header, rows)
    assert a.read_bytes() == b.read_bytes()
    with open(a, newline="") as fh:
        parsed = list(csv.reader(fh))
    assert parsed[0] == header
    assert float(parsed[1][1]) == 1.0 / 3.0
    assert float(parsed[2][1]) == np.e


def test_finite_solution_csv_layout(tmp_path, noise_bench):
    sol = integrate_riccati_system(noise_bench, 1.0, steps=10)
    path = tmp_path / "sol.csv"
    write_finite_solution_csv(str(path), sol)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:4] == ["t", "P_0_0", "Pi_0_0", "P1_0_0"]
    assert "Theta_0_0" in rows[0] and "theta_0" in rows[0]
    assert len(rows) == 1 + len(sol.grid)
    k = 3
    got = dict(zip(rows[0], rows[1 + k]))
    assert float(got["t"]) == sol.grid[k]
    assert float(got["P_0_0"]) == sol.P[k][0, 0]
    assert float(got["p0"]) == sol.p0[k]


def test_series_csv_two_columns(tmp_path):
    t = np.linspace(0.0, 1.0, 5)
    v = np.exp(-t)
    path = tmp_path / "series.csv"
    write_series_csv(str(path), t, v)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "value"]
    assert [float(r[1]) for r in rows[1:]] == v.tolist()


def test_moments_csv_layout(tmp_path, noise_bench, noise_bench_erg):
    spec = ClosedLoopSpec(noise_bench, noise_bench_erg, [1.0])
    mp = propagate_moments(spec, np.linspace(0.0, 1.0, 6))
    path = tmp_path / "moments.csv"
    write_moments_csv(str(path), mp)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "mean_0", "second_0_0"]
    assert len(rows) == 7
    assert float(rows[-1][2]) == mp.second[-1][0, 0]


def test_ensemble_csv_long_format(tmp_path, noise_bench, noise_bench_erg):
    spec = ClosedLoopSpec(noise_bench, noise_bench_erg, [0.5])
    ens = simulate(spec, np.linspace(0.0, 0.5, 3), paths=4, seed=11)
    path = tmp_path / "paths.csv"
    write_ensemble_csv(str(path), ens)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["path", "t", "x_0", "u_0"]
    assert len(rows) == 1 + 4 * 3
    assert rows[1][0] == "0" and rows[4][0] == "1"
    assert float(rows[1][2]) == ens.states[0, 0, 0]


# -------------------------------------------------------------- JSON shapes


def test_ergodic_doc_shape(noise_bench_erg):
    doc = ergodic_solution_doc(noise_bench_erg)
    assert doc["c0"] == noise_bench_erg.c0
    assert doc["P"] == noise_bench_erg.P.tolist()
    certs = doc["certificates"]
    assert certs["mean_drift"]["ok"] is True
    assert certs["mean_square"]["ok"] is True
    assert "witness" in certs["mean_drift"]
    assert set(doc["residuals"]) == set(noise_bench_erg.residuals)
    json.loads(dumps_json(doc))


def test_finite_doc_shape(noise_bench):
    sol = integrate_riccati_system(noise_bench, 2.0, steps=50)
    doc = finite_solution_doc(sol)
    assert doc["T"] == 2.0
    assert doc["steps"] == 50
    assert doc["P0"] == sol.P[0].tolist()
    assert "diagnostics" in doc
    json.loads(dumps_json(doc))


def test_validation_doc_nan_becomes_null():
    report = validate_h1(scalar_model(R=[[1e-12]]))
    doc = validation_doc(report)
    assert doc["ok"] is False
    assert doc["h1_min_eigs"]["state_weight"] is None
    assert doc["h1_min_eigs"]["mean_weight"] is None
    assert doc["control_weight_min_eig"] == report.r_min_eig
    json.loads(dumps_json(doc))


def test_error_doc_carries_structured_fields():
    doc = error_doc(ProblemFormatError("bad matrix", path="$.Q"), 2)
    assert doc["error"]["type"] == "ProblemFormatError"
    assert doc["error"]["exit_code"] == 2
    assert doc["error"]["path"] == "$.Q"


# --------------------------------------------------------------- text report


def test_text_report_mentions_fits_and_ladder(noise_bench, noise_bench_erg):
    from mflq import cesaro_convergence, gain_convergence
    from mflq.turnpike_lab import TurnpikeReport

    fin = integrate_riccati_system(noise_bench, 10.0)
    gains = gain_convergence(fin, noise_bench_erg)
    cesaro = cesaro_convergence(noise_bench, [0.0], [5.0, 10.0],
                                erg=noise_bench_erg)
    text = format_text_report(TurnpikeReport(gains=gains, pair=None,
                                             cesaro=cesaro))
    assert "Turnpike report" in text
    assert "rate" in text and "R^2" in text
    assert "refused:" in text  # theta/p series are identically zero here
    assert "extrapolated limit" in text


# ------------------------------------------------------------ output guards


def test_ensure_output_dir_refuses_overwrite(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    (out / "sol.csv").write_text("x", encoding="utf-8")
    with pytest.raises(FileExistsError, match="--force"):
        ensure_output_dir(str(out), ["sol.csv", "fresh.csv"], force=False)
    ensure_output_dir(str(out), ["sol.csv"], force=True)
    ensure_output_dir(str(tmp_path / "new"), ["a.csv"], force=False)
