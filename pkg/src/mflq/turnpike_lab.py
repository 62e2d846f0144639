"""Turnpike experiments: gap series, exponential rate fits, Cesaro limits.

Three quantitative phenomena are measured here, each against a
deterministic reference computed elsewhere in the package:

* the finite-horizon feedback quantities converge backward in time to
  their stationary counterparts (``gain_convergence``),
* the coupled optimal processes started apart meet in the interior of
  ``[0, T]`` and separate only inside two boundary layers
  (``pair_deviation``),
* the time-averaged value function converges to the ergodic constant
  with an O(1/T) gap (``cesaro_convergence``).

Rates are extracted by least squares on log gaps. One-sided series are
fit on the window away from the terminal layer; the pair deviation is
fit with a two-exponential profile a(exp(-l1 t) + exp(-l2 (T-t)))
covering both layers at once. Values at or below 1e-13 are excluded
from every fit: they sit on the double-precision noise floor and their
logs are meaningless.

The module emits data and fitted coefficients only; rendering belongs
to the command-line layer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .mfsim import PairMomentPath, propagate_pair_moments
from .model import MFModel
from .riccati_ergodic import ErgodicSolution, solve_ergodic_system
from .riccati_finite import (
    FiniteHorizonSolution,
    default_steps,
    integrate_riccati_system,
    value_function,
)

#: Gap values at or below this are double-precision noise, not signal.
FIT_FLOOR = 1e-13

#: Minimum usable points for any log-linear fit.
MIN_FIT_POINTS = 5

#: One-sided fits stop at this fraction of the horizon to stay clear of
#: the terminal boundary layer.
ONE_SIDED_WINDOW = 0.8


@dataclass(frozen=True)
class ExpFit:
    """Least-squares fit of value ~ amplitude * exp(-rate * x)."""

    quantity: str
    amplitude: float
    rate: float
    r2: float
    window: tuple[float, float]
    points: int

    @property
    def ok(self) -> bool:
        return True

    def predict(self, x):
        return self.amplitude * np.exp(-self.rate * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class FitRefusal:
    """Returned when a series has too little signal to fit honestly."""

    quantity: str
    reason: str
    points: int

    @property
    def ok(self) -> bool:
        return False


@dataclass(frozen=True)
class TwoSidedFit:
    """Fit of value ~ amplitude * (exp(-rate_initial*t) + exp(-rate_terminal*(T-t)))."""

    quantity: str
    amplitude: float
    rate_initial: float
    rate_terminal: float
    r2: float
    horizon: float
    midpoint_value: float
    midpoint_prediction: float
    points: int

    @property
    def ok(self) -> bool:
        return True

    @property
    def layer_initial(self) -> float:
        """e-folding width of the departure layer."""
        return 1.0 / self.rate_initial

    @property
    def layer_terminal(self) -> float:
        """e-folding width of the arrival layer."""
        return 1.0 / self.rate_terminal

    def predict(self, t):
        t = np.asarray(t, dtype=float)
        return self.amplitude * (
            np.exp(-self.rate_initial * t)
            + np.exp(-self.rate_terminal * (self.horizon - t))
        )


def fit_exponential(t, values, window: tuple[float, float] | None = None,
                    quantity: str = "series") -> ExpFit | FitRefusal:
    """Ordinary least squares on log values against t.

    Points outside ``window`` (inclusive) or with value <= 1e-13 are
    dropped; fewer than five surviving points yields a
    :class:`FitRefusal` instead of a number dressed up as one.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if t.shape != values.shape or t.ndim != 1:
        raise ValueError("t and values must be one-dimensional with equal length")
    mask = values > FIT_FLOOR
    if window is not None:
        lo, hi = window
        mask &= (t >= lo - 1e-12) & (t <= hi + 1e-12)
    pts = int(mask.sum())
    if pts < MIN_FIT_POINTS:
        return FitRefusal(
            quantity=quantity,
            reason=f"only {pts} points above the 1e-13 floor in the fit window "
                   f"({MIN_FIT_POINTS} required)",
            points=pts,
        )
    x = t[mask]
    y = np.log(values[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return ExpFit(
        quantity=quantity,
        amplitude=float(np.exp(intercept)),
        rate=float(-slope),
        r2=r2,
        window=(float(x.min()), float(x.max())),
        points=pts,
    )


@dataclass(frozen=True)
class GainConvergence:
    """Gap series between finite-horizon and stationary quantities."""

    grid: np.ndarray
    horizon: float
    gaps: dict[str, np.ndarray] = field(compare=False)
    fits: dict[str, ExpFit | FitRefusal] = field(compare=False)


def gain_convergence(finite: FiniteHorizonSolution,
                     erg: ErgodicSolution) -> GainConvergence:
    """Backward convergence of every feedback quantity on one grid.

    For each of P, Pi, Theta, ThetaBar, theta, p the Frobenius-norm gap
    to the stationary value is tabulated per grid point, then fit
    against time-to-go T - t on t in [0, 0.8 T].
    """
    if finite.model.fingerprint != erg.model.fingerprint:
        raise ValueError("finite and ergodic solutions belong to different models")
    T = finite.T
    grid = finite.grid
    pairs = {
        "P": (finite.P, erg.P),
        "Pi": (finite.Pi, erg.Pi),
        "Theta": (finite.Theta, erg.Theta),
        "ThetaBar": (finite.ThetaBar, erg.ThetaBar),
        "theta": (finite.theta, erg.theta),
        "p": (finite.p, erg.p),
    }
    gaps = {}
    fits = {}
    for name, (series, target) in pairs.items():
        diff = series - target[None]
        axes = tuple(range(1, diff.ndim))
        gap = np.sqrt(np.sum(diff * diff, axis=axes))
        gaps[name] = gap
        mask = grid <= ONE_SIDED_WINDOW * T + 1e-12
        fits[name] = fit_exponential(T - grid[mask], gap[mask], quantity=name)
    return GainConvergence(grid=grid, horizon=T, gaps=gaps, fits=fits)


@dataclass(frozen=True)
class PairDeviation:
    """Mean-square gaps between the coupled finite and ergodic processes."""

    grid: np.ndarray
    horizon: float
    state_gap: np.ndarray
    control_gap: np.ndarray
    fits: dict[str, TwoSidedFit | FitRefusal] = field(compare=False)
    # Full stacked moments; not serialized, absent after a round-trip.
    moments: PairMomentPath | None = field(compare=False, repr=False)


def _fit_two_sided(t, values, T, quantity) -> TwoSidedFit | FitRefusal:
    mask = values > FIT_FLOOR
    pts = int(mask.sum())
    mid_idx = int(np.argmin(np.abs(t - T / 2.0)))
    if pts < MIN_FIT_POINTS:
        return FitRefusal(
            quantity=quantity,
            reason=f"only {pts} points above the 1e-13 floor "
                   f"({MIN_FIT_POINTS} required)",
            points=pts,
        )
    x = t[mask]
    y = np.log(values[mask])

    # Initial guesses from one-sided fits on each half.
    def half_guess(xs, ys, sign):
        if len(xs) < 2:
            return np.log(values.max()), 1.0
        slope, intercept = np.polyfit(xs, ys, 1)
        return intercept, max(sign * slope, 1e-3)

    left = x <= T / 2.0
    a1, l1 = half_guess(x[left], y[left], -1.0)
    a2raw, l2 = half_guess(T - x[~left], y[~left], -1.0)
    loga0 = (a1 + a2raw) / 2.0

    def resid(params):
        loga, lam1, lam2 = params
        return loga + np.logaddexp(-lam1 * x, -lam2 * (T - x)) - y

    sol = least_squares(
        resid,
        x0=[loga0, l1, l2],
        bounds=([-np.inf, 1e-8, 1e-8], [np.inf, np.inf, np.inf]),
        max_nfev=2000,
    )
    if not sol.success:
        return FitRefusal(quantity=quantity,
                          reason=f"least squares failed: {sol.message}",
                          points=pts)
    loga, lam1, lam2 = sol.x
    model_log = loga + np.logaddexp(-lam1 * x, -lam2 * (T - x))
    ss_res = float(np.sum((model_log - y) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    amplitude = float(np.exp(loga))
    tm = t[mid_idx]
    prediction = amplitude * (np.exp(-lam1 * tm) + np.exp(-lam2 * (T - tm)))
    return TwoSidedFit(
        quantity=quantity,
        amplitude=amplitude,
        rate_initial=float(lam1),
        rate_terminal=float(lam2),
        r2=r2,
        horizon=float(T),
        midpoint_value=float(values[mid_idx]),
        midpoint_prediction=float(prediction),
        points=pts,
    )


def pair_deviation(
    model: MFModel,
    finite: FiniteHorizonSolution,
    erg: ErgodicSolution,
    x0_finite,
    x0_erg,
    grid=None,
) -> PairDeviation:
    """Deviation profile of the coupled pair, with two-sided rate fits.

    The state and control mean-square gaps come from the exact moment
    ODEs (no sampling); each is fit over the whole grid to a shared
    amplitude times two exponentials, one per boundary layer.
    """
    if grid is None:
        grid = finite.grid
    moments = propagate_pair_moments(model, finite, erg, x0_finite, x0_erg, grid)
    T = finite.T
    fits = {
        "state": _fit_two_sided(moments.grid, moments.state_gap, T, "state"),
        "control": _fit_two_sided(moments.grid, moments.control_gap, T, "control"),
    }
    return PairDeviation(
        grid=moments.grid,
        horizon=T,
        state_gap=moments.state_gap,
        control_gap=moments.control_gap,
        fits=fits,
        moments=moments,
    )


@dataclass(frozen=True)
class CesaroRow:
    horizon: float
    average: float      # V_T(x) / T
    reference: float    # the ergodic constant
    gap: float          # |average - reference|


@dataclass(frozen=True)
class CesaroTable:
    """Time-averaged value against the ergodic constant per horizon."""

    start: np.ndarray
    reference: float
    rows: list[CesaroRow]
    bounded: bool | None    # None when a single horizon makes the check moot
    extrapolated: float | None

    @property
    def horizons(self) -> list[float]:
        return [row.horizon for row in self.rows]


def cesaro_convergence(model: MFModel, x, horizons,
                       erg: ErgodicSolution | None = None) -> CesaroTable:
    """V_T(x)/T across a ladder of horizons, against the ergodic constant.

    The reference constant always comes from the stationary solve, never
    from extrapolating the table (the extrapolated limit is reported
    separately, for diagnostics). Boundedness of T * gap is checked as
    max <= 2 * median across the ladder; with one horizon there is
    nothing to check and a warning says so.
    """
    horizons = [float(T) for T in horizons]
    if not horizons:
        raise ValueError("horizons must be non-empty")
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must be strictly ascending")
    x = np.asarray(x, dtype=float).reshape(model.n)
    if erg is None:
        erg = solve_ergodic_system(model)
    c0 = erg.c0

    rows = []
    for T in horizons:
        # Finer than the solver default: the value function cross-checks
        # its constant term by trapezoid quadrature (O(h^2)), and the
        # 1e-6 agreement it expects needs h <= 0.004 or so.
        steps = max(400, default_steps(T), int(np.ceil(250 * T)))
        sol = integrate_riccati_system(model, T, steps=steps)
        avg = value_function(sol, x) / T
        rows.append(CesaroRow(horizon=T, average=avg, reference=c0,
                              gap=abs(avg - c0)))

    extrapolated = None
    if len(rows) >= 2:
        # avg(T) = limit + a/T + o(1/T): the T-weighted difference of the
        # two largest horizons cancels the 1/T term.
        r1, r2 = rows[-2], rows[-1]
        extrapolated = (r2.horizon * r2.average - r1.horizon * r1.average) / (
            r2.horizon - r1.horizon
        )

    if len(rows) == 1:
        warnings.warn("single horizon: the boundedness of T * gap "
                      "cannot be checked", stacklevel=2)
        bounded = None
    else:
        scaled = np.array([row.horizon * row.gap for row in rows])
        bounded = bool(scaled.max() <= 2.0 * np.median(scaled))
        if not bounded:
            warnings.warn(
                "T * gap grows across the horizon ladder "
                f"(max {scaled.max():.3e} > 2 x median {np.median(scaled):.3e}); "
                "the time-average is not settling at the expected O(1/T) pace",
                stacklevel=2,
            )
    return CesaroTable(start=x, reference=c0, rows=rows, bounded=bounded,
                       extrapolated=extrapolated)


@dataclass(frozen=True)
class TurnpikeReport:
    """Everything one turnpike study produces, ready for serialization."""

    gains: GainConvergence
    pair: PairDeviation | None
    cesaro: CesaroTable | None

    def fitted(self) -> list[ExpFit | TwoSidedFit | FitRefusal]:
        out = list(self.gains.fits.values())
        if self.pair is not None:
            out.extend(self.pair.fits.values())
        return out


def _fit_to_dict(f) -> dict:
    if isinstance(f, ExpFit):
        return {"kind": "one-sided", "quantity": f.quantity,
                "amplitude": f.amplitude, "rate": f.rate, "r2": f.r2,
                "window": list(f.window), "points": f.points}
    if isinstance(f, TwoSidedFit):
        return {"kind": "two-sided", "quantity": f.quantity,
                "amplitude": f.amplitude, "rate_initial": f.rate_initial,
                "rate_terminal": f.rate_terminal, "r2": f.r2,
                "horizon": f.horizon, "midpoint_value": f.midpoint_value,
                "midpoint_prediction": f.midpoint_prediction,
                "points": f.points}
    return {"kind": "refusal", "quantity": f.quantity, "reason": f.reason,
            "points": f.points}


def _fit_from_dict(doc: dict):
    kind = doc["kind"]
    if kind == "one-sided":
        return ExpFit(quantity=doc["quantity"], amplitude=doc["amplitude"],
                      rate=doc["rate"], r2=doc["r2"],
                      window=tuple(doc["window"]), points=doc["points"])
    if kind == "two-sided":
        return TwoSidedFit(quantity=doc["quantity"], amplitude=doc["amplitude"],
                           rate_initial=doc["rate_initial"],
                           rate_terminal=doc["rate_terminal"], r2=doc["r2"],
                           horizon=doc["horizon"],
                           midpoint_value=doc["midpoint_value"],
                           midpoint_prediction=doc["midpoint_prediction"],
                           points=doc["points"])
    if kind == "refusal":
        return FitRefusal(quantity=doc["quantity"], reason=doc["reason"],
                          points=doc["points"])
    raise ValueError(f"unknown fit kind {kind!r}")


def report_to_dict(report: TurnpikeReport) -> dict:
    """Plain-data form of a report (floats kept exact; see serialize)."""
    gains = report.gains
    doc: dict = {
        "gains": {
            "grid": gains.grid.tolist(),
            "horizon": gains.horizon,
            "gaps": {k: v.tolist() for k, v in gains.gaps.items()},
            "fits": {k: _fit_to_dict(v) for k, v in gains.fits.items()},
        }
    }
    if report.pair is not None:
        pair = report.pair
        doc["pair"] = {
            "grid": pair.grid.tolist(),
            "horizon": pair.horizon,
            "state_gap": pair.state_gap.tolist(),
            "control_gap": pair.control_gap.tolist(),
            "fits": {k: _fit_to_dict(v) for k, v in pair.fits.items()},
        }
    if report.cesaro is not None:
        ces = report.cesaro
        doc["cesaro"] = {
            "start": ces.start.tolist(),
            "reference": ces.reference,
            "rows": [
                {"horizon": r.horizon, "average": r.average,
                 "reference": r.reference, "gap": r.gap}
                for r in ces.rows
            ],
            "bounded": ces.bounded,
            "extrapolated": ces.extrapolated,
        }
    return doc


def report_from_dict(doc: dict) -> TurnpikeReport:
    """Inverse of :func:`report_to_dict`; exact for round-tripped floats."""
    g = doc["gains"]
    gains = GainConvergence(
        grid=np.asarray(g["grid"], dtype=float),
        horizon=g["horizon"],
        gaps={k: np.asarray(v, dtype=float) for k, v in g["gaps"].items()},
        fits={k: _fit_from_dict(v) for k, v in g["fits"].items()},
    )
    pair = None
    if "pair" in doc:
        p = doc["pair"]
        pair = PairDeviation(
            grid=np.asarray(p["grid"], dtype=float),
            horizon=p["horizon"],
            state_gap=np.asarray(p["state_gap"], dtype=float),
            control_gap=np.asarray(p["control_gap"], dtype=float),
            fits={k: _fit_from_dict(v) for k, v in p["fits"].items()},
            moments=None,
        )
    cesaro = None
    if "cesaro" in doc:
        c = doc["cesaro"]
        cesaro = CesaroTable(
            start=np.asarray(c["start"], dtype=float),
            reference=c["reference"],
            rows=[CesaroRow(horizon=r["horizon"], average=r["average"],
                            reference=r["reference"], gap=r["gap"])
                  for r in c["rows"]],
            bounded=c["bounded"],
            extrapolated=c["extrapolated"],
        )
    return TurnpikeReport(gains=gains, pair=pair, cesaro=cesaro)


__all__ = [
    "FIT_FLOOR",
    "MIN_FIT_POINTS",
    "ONE_SIDED_WINDOW",
    "CesaroRow",
    "CesaroTable",
    "ExpFit",
    "FitRefusal",
    "GainConvergence",
    "PairDeviation",
    "TurnpikeReport",
    "TwoSidedFit",
    "cesaro_convergence",
    "fit_exponential",
    "gain_convergence",
    "pair_deviation",
    "report_from_dict",
    "report_to_dict",
]
