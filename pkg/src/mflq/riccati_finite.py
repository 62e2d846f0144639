"""Backward integration of the coupled finite-horizon Riccati system.

Six quantities are integrated together on [0, T], all with zero terminal
data: the state curvature P(t), the mean curvature Pi(t), the mixed
curvature P1(t), the linear offsets p(t) and p1(t), and the scalar p0(t)
that accumulates the constant part of the value function. The feedback
gains are algebraic functions of (P, Pi, p) and are re-derived from the
current iterate at every Runge-Kutta stage, never interpolated into the
vector field.

With y = x - xbar, the optimal control is

    u(t) = Theta(t) y + ThetaBar(t) xbar + theta(t),

and the value of starting at x is <Pi(0) x, x> + 2 <p(0), x> + p0(0).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError, ValidationFailure
from .linalg import sym_eig_min
from .model import MFModel, eval_functionals, validate_h1

#: Tolerance used when checking positive semidefiniteness along the grid.
PSD_SLACK = 1e-9

#: Max admissible residual of the gain defining identities on the grid.
GAIN_IDENTITY_TOL = 1e-10


def default_steps(T: float) -> int:
    """Grid resolution used when the caller does not pick one."""
    return max(200, math.ceil(100.0 * T))


@dataclass(frozen=True)
class FiniteHorizonSolution:
    """Grid solution of the finite-horizon system; immutable once built.

    Arrays are indexed by grid point: ``P[k]`` is P(grid[k]) and so on.
    ``Theta``/``ThetaBar`` are the m-by-n feedback gains and ``theta`` the
    m-vector offset, all satisfying their defining identities at every
    grid point.
    """

    model: MFModel
    T: float
    grid: np.ndarray
    P: np.ndarray       # (K+1, n, n)
    Pi: np.ndarray      # (K+1, n, n)
    P1: np.ndarray      # (K+1, n, n)
    p: np.ndarray       # (K+1, n)
    p1: np.ndarray      # (K+1, n)
    p0: np.ndarray      # (K+1,)
    Theta: np.ndarray   # (K+1, m, n)
    ThetaBar: np.ndarray
    theta: np.ndarray   # (K+1, m)
    diagnostics: dict = field(default_factory=dict, compare=False)


def _rhs(model: MFModel, t: float, P, Pi, P1, p, p1):
    """Backward vector field (dP/dt, dPi/dt, dP1/dt, dp/dt, dp1/dt, dp0/dt)."""
    terms = eval_functionals(model, P, Pi)
    ctrl_min = sym_eig_min(terms.control)
    if ctrl_min <= 0.0:
        raise SolverError(
            f"effective control weight lost positive definiteness at t={t:.6g} "
            f"(min eigenvalue {ctrl_min:.3e}); check the weight assumptions or "
            "refine the grid"
        )
    d = model.derived
    A, B, C, D, S = model.A, model.B, model.C, model.D, model.S
    b, sigma, q, r = model.b, model.sigma, model.q, model.r

    Theta = -np.linalg.solve(terms.control, terms.cross)
    ThetaBar = -np.linalg.solve(terms.control, terms.mean_cross)
    v = B.T @ p + D.T @ (P @ sigma) + r
    theta = -np.linalg.solve(terms.control, v)

    # Quadratic blocks. 𝒬 - 𝒮ᵀ ℛ⁻¹ 𝒮 written as 𝒬 + 𝒮ᵀ Θ (one solve, reused).
    dP = -(terms.state + terms.cross.T @ Theta)
    dPi = -(terms.mean_state + terms.mean_cross.T @ ThetaBar)

    Acl = A + B @ Theta            # closed-loop matrix of the centered state
    Am = d.Ahat + B @ ThetaBar     # closed-loop matrix of the mean
    dP1 = -(
        Acl.T @ P1 + P1 @ Am
        + C.T @ P @ d.Chat + model.Q
        - P @ (B @ ThetaBar)
        + Theta.T @ (D.T @ P @ d.Chat + S)
    )

    dp = -(Am.T @ p + (d.Chat + D @ ThetaBar).T @ (P @ sigma) + ThetaBar.T @ r
           + Pi @ b + q)
    dp1 = -(
        Acl.T @ p1 + P @ b + C.T @ (P @ sigma) + q
        + (P1 - P) @ (B @ theta + b)
        + Theta.T @ (D.T @ (P @ sigma) + r)
    )
    # dp0/dt = θᵀℛθ - 2 pᵀb - σᵀPσ, and θᵀℛθ = -vᵀθ.
    dp0 = -(float(v @ theta) + 2.0 * float(p @ b) + float(sigma @ (P @ sigma)))
    return dP, dPi, dP1, dp, dp1, dp0


def _pack(P, Pi, P1, p, p1, p0) -> np.ndarray:
    return np.concatenate([P.ravel(), Pi.ravel(), P1.ravel(), p, p1, [p0]])


def _unpack(y: np.ndarray, n: int):
    nn = n * n
    P = y[:nn].reshape(n, n)
    Pi = y[nn:2 * nn].reshape(n, n)
    P1 = y[2 * nn:3 * nn].reshape(n, n)
    p = y[3 * nn:3 * nn + n]
    p1 = y[3 * nn + n:3 * nn + 2 * n]
    p0 = float(y[-1])
    return P, Pi, P1, p, p1, p0


def integrate_riccati_system(
    model: MFModel,
    T: float,
    steps: int | None = None,
    *,
    check: bool = True,
    allow_coarse: bool = False,
) -> FiniteHorizonSolution:
    """Integrate the six-equation system backward from t=T to t=0.

    Classical fixed-step RK4 on a uniform grid of ``steps`` intervals
    (default :func:`default_steps`). ``check=False`` skips the weight
    validation (used by the CLI's --force); ``allow_coarse=True`` lifts
    the ``steps >= 10 T`` guard.

    Raises :class:`SolverError` when the effective control weight loses
    definiteness at any stage or the iterates stop being finite.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if steps is None:
        steps = default_steps(T)
    if steps < 1:
        raise ValueError("steps must be a positive integer")
    if steps < 10 * T and not allow_coarse:
        raise ValueError(
            f"steps={steps} is coarser than 10 per time unit for T={T}; "
            "pass allow_coarse=True to override"
        )
    if check:
        report = validate_h1(model)
        if not report.h1_ok:
            raise ValidationFailure(
                "weight assumptions fail: " + "; ".join(report.messages)
            )

    n, m = model.n, model.m
    K = int(steps)
    grid = np.linspace(0.0, T, K + 1)
    h = T / K

    nn = n * n
    Ps = np.zeros((K + 1, n, n))
    Pis = np.zeros((K + 1, n, n))
    P1s = np.zeros((K + 1, n, n))
    ps = np.zeros((K + 1, n))
    p1s = np.zeros((K + 1, n))
    p0s = np.zeros(K + 1)

    def f(t: float, y: np.ndarray) -> np.ndarray:
        P, Pi, P1, p, p1, _ = _unpack(y, n)
        dP, dPi, dP1, dp, dp1, dp0 = _rhs(model, t, P, Pi, P1, p, p1)
        return _pack(dP, dPi, dP1, dp, dp1, dp0)

    y = np.zeros(3 * nn + 2 * n + 1)  # all terminal data are zero
    for k in range(K, 0, -1):
        t = grid[k]
        k1 = f(t, y)
        k2 = f(t - h / 2, y - (h / 2) * k1)
        k3 = f(t - h / 2, y - (h / 2) * k2)
        k4 = f(t - h, y - h * k3)
        y = y - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise SolverError(f"non-finite Riccati iterate at t={grid[k - 1]:.6g}")
        # Keep the quadratic blocks exactly symmetric step by step.
        P, Pi, P1, p, p1, p0 = _unpack(y, n)
        y[:nn] = ((P + P.T) / 2.0).ravel()
        y[nn:2 * nn] = ((Pi + Pi.T) / 2.0).ravel()
        P, Pi, P1, p, p1, p0 = _unpack(y, n)
        kk = k - 1
        Ps[kk], Pis[kk], P1s[kk] = P, Pi, P1
        ps[kk], p1s[kk], p0s[kk] = p, p1, p0

    # Gains and invariant checks in one pass over the grid.
    Thetas = np.zeros((K + 1, m, n))
    ThetaBars = np.zeros((K + 1, m, n))
    thetas = np.zeros((K + 1, m))
    gain_resid = 0.0
    psd_min = np.inf
    ctrl_min = np.inf
    for k in range(K + 1):
        terms = eval_functionals(model, Ps[k], Pis[k])
        v = model.B.T @ ps[k] + model.D.T @ (Ps[k] @ model.sigma) + model.r
        Thetas[k] = -np.linalg.solve(terms.control, terms.cross)
        ThetaBars[k] = -np.linalg.solve(terms.control, terms.mean_cross)
        thetas[k] = -np.linalg.solve(terms.control, v)
        gain_resid = max(
            gain_resid,
            float(np.max(np.abs(terms.control @ Thetas[k] + terms.cross))),
            float(np.max(np.abs(terms.control @ ThetaBars[k] + terms.mean_cross))),
            float(np.max(np.abs(terms.control @ thetas[k] + v))),
        )
        psd_min = min(psd_min, sym_eig_min(Ps[k]), sym_eig_min(Pis[k]))
        ctrl_min = min(ctrl_min, sym_eig_min(terms.control))

    if psd_min < -PSD_SLACK:
        raise SolverError(
            f"P or Pi lost positive semidefiniteness along the grid "
            f"(min eigenvalue {psd_min:.3e})"
        )
    if gain_resid > GAIN_IDENTITY_TOL:
        raise SolverError(
            f"gain identities violated on the grid (residual {gain_resid:.3e})"
        )

    return FiniteHorizonSolution(
        model=model,
        T=float(T),
        grid=grid,
        P=Ps, Pi=Pis, P1=P1s, p=ps, p1=p1s, p0=p0s,
        Theta=Thetas, ThetaBar=ThetaBars, theta=thetas,
        diagnostics={
            "gain_identity_residual": gain_resid,
            "psd_min_eig": psd_min,
            "control_weight_min_eig": ctrl_min,
            "step": h,
        },
    )


def _bracket(grid: np.ndarray, t: float) -> tuple[int, float]:
    """Index k and weight w with t = (1-w) grid[k] + w grid[k+1]."""
    k = int(np.searchsorted(grid, t, side="right")) - 1
    k = min(max(k, 0), len(grid) - 2)
    h = grid[k + 1] - grid[k]
    return k, (t - grid[k]) / h


def gains_at(sol: FiniteHorizonSolution, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Feedback gains at time t, linearly interpolated between grid points."""
    if t < sol.grid[0] - 1e-12 or t > sol.grid[-1] + 1e-12:
        raise ValueError(f"t={t} outside the solution horizon [0, {sol.T}]")
    t = min(max(t, sol.grid[0]), sol.grid[-1])
    k, w = _bracket(sol.grid, t)
    Theta = (1 - w) * sol.Theta[k] + w * sol.Theta[k + 1]
    ThetaBar = (1 - w) * sol.ThetaBar[k] + w * sol.ThetaBar[k + 1]
    theta = (1 - w) * sol.theta[k] + w * sol.theta[k + 1]
    return Theta, ThetaBar, theta


def _trapezoid(y: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum((y[1:] + y[:-1]) * np.diff(x)) / 2.0)


def value_function(sol: FiniteHorizonSolution, x: np.ndarray) -> float:
    """Optimal cost-to-go from initial state x over [0, T].

    Also cross-checks the stored constant p0(0) against the trapezoid
    quadrature of its defining integrand on the grid; disagreement beyond
    1e-6 relative draws a warning (it signals a too-coarse grid).
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (sol.model.n,):
        raise ValueError(f"x must have shape ({sol.model.n},), got {x.shape}")

    model = sol.model
    sigma, b = model.sigma, model.b
    # Integrand of the constant term: σᵀPσ + 2 pᵀb - θᵀℛ(P)θ.
    vals = np.empty(len(sol.grid))
    for k in range(len(sol.grid)):
        ctrl = model.R + model.D.T @ sol.P[k] @ model.D
        vals[k] = (
            float(sigma @ (sol.P[k] @ sigma))
            + 2.0 * float(sol.p[k] @ b)
            - float(sol.theta[k] @ (ctrl @ sol.theta[k]))
        )
    quad = _trapezoid(vals, sol.grid)
    p00 = float(sol.p0[0])
    scale = max(abs(p00), abs(quad), 1e-30)
    if abs(quad - p00) > 1e-6 * scale:
        warnings.warn(
            f"constant term cross-check disagrees: integrated {p00:.12g} vs "
            f"trapezoid {quad:.12g}; consider a finer grid",
            stacklevel=2,
        )
    return float(x @ (sol.Pi[0] @ x) + 2.0 * float(sol.p[0] @ x) + p00)


__all__ = [
    "FiniteHorizonSolution",
    "default_steps",
    "gains_at",
    "integrate_riccati_system",
    "value_function",
]
