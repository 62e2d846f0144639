"""Stationary (ergodic) counterpart of the finite-horizon system.

The six differential equations lose their time derivatives and become an
algebraic cascade: two algebraic Riccati equations for P and Pi, a
Sylvester equation for P1, two linear solves for p and p1, and a closed
form for the long-run average cost c0. Constant feedback gains follow
from (P, Pi, p) exactly as in the finite-horizon case.

The ARE pair is solved by running the backward Riccati flow to
saturation (under the weight assumptions the flow converges to the
stabilizing solution at an exponential rate) and then polishing with a
damped Newton iteration; each Newton step is one generalized Lyapunov
solve. Stability of the result is certified, never assumed: the mean
closed-loop matrix gets a Hurwitz witness and the centered closed loop a
mean-square witness.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError, SpectraOverlapError, ValidationFailure
from .linalg import (
    Refusal,
    StabilityCertificate,
    certify_hurwitz,
    certify_mean_square,
    solve_lyapunov,
    solve_ms_lyapunov,
    solve_sylvester,
    sym_eig_min,
)
from .model import MFModel, eval_functionals, validate_h1

#: Residual budget of the algebraic system, relative to the input scale.
ERGODIC_RESIDUAL_TOL = 1e-8

#: Pseudo-horizon after which the saturation phase gives up.
MAX_PSEUDO_HORIZON = 400.0

_SATURATION_STEP = 0.01
_NEWTON_MAX_ITER = 20

#: Iterate magnitude past which the saturation flow is declared divergent
#: (a stabilizing solution of a desk-scale problem is orders smaller).
_DIVERGENCE_CAP = 1e10


@dataclass(frozen=True)
class ErgodicSolution:
    """Constants of the stationary problem plus stability certificates."""

    model: MFModel
    P: np.ndarray
    Pi: np.ndarray
    P1: np.ndarray
    p: np.ndarray
    p1: np.ndarray
    c0: float
    Theta: np.ndarray
    ThetaBar: np.ndarray
    theta: np.ndarray
    cert_mean: StabilityCertificate
    cert_ms: StabilityCertificate
    residuals: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class StaticOptimum:
    """Solution of the constrained static problem linked to the turnpike.

    Minimizes the stationary cost over (x, u) subject to the drift
    fixed-point constraint (A + Abar) x + B u + b = 0. The two residuals
    record how well the ergodic feedback reproduces it: ``gain_identity_
    residual`` is |u* - (ThetaBar x* + theta)| and ``fixed_point_residual``
    is |x* + (Ahat + B ThetaBar)^{-1} (B theta + b)|.
    """

    xstar: np.ndarray
    ustar: np.ndarray
    multiplier: np.ndarray
    objective: float
    gain_identity_residual: float
    fixed_point_residual: float


def _are_residuals(model: MFModel, P: np.ndarray, Pi: np.ndarray):
    """Residual matrices of the two AREs, plus the gains at (P, Pi)."""
    terms = eval_functionals(model, P, Pi)
    Theta = -np.linalg.solve(terms.control, terms.cross)
    ThetaBar = -np.linalg.solve(terms.control, terms.mean_cross)
    FP = terms.state + terms.cross.T @ Theta
    FPi = terms.mean_state + terms.mean_cross.T @ ThetaBar
    return FP, FPi, Theta, ThetaBar, terms


def solve_are_pair(model: MFModel, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Stabilizing solutions of the coupled algebraic Riccati pair.

    Phase 1 integrates the backward (P, Pi) flow from zero data with RK4
    until the vector field drops below ``0.1 * tol`` in max norm (error
    if that does not happen within the pseudo-horizon). Phase 2 polishes
    with damped Newton, one generalized Lyapunov solve per step, until
    the algebraic residual is at round-off (or at worst ``tol``).

    The result is verified: P, Pi positive definite and both closed-loop
    stability certificates must succeed.
    """
    report = validate_h1(model)
    if not report.h1_ok:
        raise ValidationFailure("weight assumptions fail: " + "; ".join(report.messages))
    n = model.n
    h = _SATURATION_STEP
    P = np.zeros((n, n))
    Pi = np.zeros((n, n))

    def flow(Pc, Pic):
        FP, FPi, _, _, _ = _are_residuals(model, Pc, Pic)
        # Backward-in-time derivative equals +residual when integrating
        # toward larger pseudo-time (the flow increases from zero data).
        return FP, FPi

    elapsed = 0.0
    saturated = False
    while elapsed < MAX_PSEUDO_HORIZON:
        k1P, k1Pi = flow(P, Pi)
        if max(np.max(np.abs(k1P)), np.max(np.abs(k1Pi))) < 0.1 * tol:
            saturated = True
            break
        k2P, k2Pi = flow(P + (h / 2) * k1P, Pi + (h / 2) * k1Pi)
        k3P, k3Pi = flow(P + (h / 2) * k2P, Pi + (h / 2) * k2Pi)
        k4P, k4Pi = flow(P + h * k3P, Pi + h * k3Pi)
        P = P + (h / 6) * (k1P + 2 * k2P + 2 * k3P + k4P)
        Pi = Pi + (h / 6) * (k1Pi + 2 * k2Pi + 2 * k3Pi + k4Pi)
        P = (P + P.T) / 2
        Pi = (Pi + Pi.T) / 2
        scale = max(np.max(np.abs(P)), np.max(np.abs(Pi)))
        if not np.isfinite(scale) or scale > _DIVERGENCE_CAP:
            raise SolverError(
                "no stabilizing solution found: Riccati flow diverged "
                f"during saturation (iterate norm beyond {_DIVERGENCE_CAP:.0e})"
            )
        elapsed += h
    if not saturated:
        raise SolverError(
            f"no stabilizing solution found: Riccati flow not saturated within "
            f"pseudo-horizon {MAX_PSEUDO_HORIZON}"
        )

    P = _newton_polish_p(model, P, Pi, tol)
    Pi = _newton_polish_pi(model, P, Pi, tol)

    for name, M in (("P", P), ("Pi", Pi)):
        if sym_eig_min(M) <= 0.0:
            raise SolverError(f"computed {name} is not positive definite")
    _, _, Theta, ThetaBar, _ = _are_residuals(model, P, Pi)
    d = model.derived
    if not certify_mean_square(model.A + model.B @ Theta, model.C + model.D @ Theta).ok:
        raise SolverError("centered closed loop failed mean-square certification")
    if not certify_hurwitz(d.Ahat + model.B @ ThetaBar).ok:
        raise SolverError("mean closed loop failed Hurwitz certification")
    return P, Pi


def _newton_polish_p(model: MFModel, P, Pi, tol: float) -> np.ndarray:
    """Newton iteration on the P-equation residual (Pi enters nowhere)."""
    def resid(Pc):
        FP, _, Theta, _, _ = _are_residuals(model, Pc, Pi)
        return FP, Theta

    FP, Theta = resid(P)
    best, best_norm = P, float(np.max(np.abs(FP)))
    floor = 1e-15 * (1.0 + np.linalg.norm(model.Q) + np.linalg.norm(P))
    for _ in range(_NEWTON_MAX_ITER):
        if best_norm <= floor:
            break
        M = model.A + model.B @ Theta
        N = model.C + model.D @ Theta
        try:
            delta = solve_ms_lyapunov(M, N, FP)
        except (SpectraOverlapError, SolverError):
            break
        alpha, improved = 1.0, False
        while alpha >= 1.0 / 64.0:
            cand = P + alpha * delta
            cand = (cand + cand.T) / 2
            Fc, Tc = resid(cand)
            norm_c = float(np.max(np.abs(Fc)))
            if norm_c < best_norm:
                P, FP, Theta, best, best_norm, improved = cand, Fc, Tc, cand, norm_c, True
                break
            alpha /= 2
        if not improved:
            break
    if best_norm > tol:
        warnings.warn(
            f"Newton polish of P stalled at residual {best_norm:.3e}; "
            "falling back to the saturated value",
            stacklevel=3,
        )
    return best


def _newton_polish_pi(model: MFModel, P, Pi, tol: float) -> np.ndarray:
    """Newton iteration on the Pi-equation residual with P held fixed."""
    def resid(Pic):
        _, FPi, _, ThetaBar, _ = _are_residuals(model, P, Pic)
        return FPi, ThetaBar

    FPi, ThetaBar = resid(Pi)
    best, best_norm = Pi, float(np.max(np.abs(FPi)))
    floor = 1e-15 * (1.0 + np.linalg.norm(model.derived.Qhat) + np.linalg.norm(Pi))
    for _ in range(_NEWTON_MAX_ITER):
        if best_norm <= floor:
            break
        Am = model.derived.Ahat + model.B @ ThetaBar
        try:
            delta = solve_lyapunov(Am, FPi)
        except (SpectraOverlapError, SolverError):
            break
        alpha, improved = 1.0, False
        while alpha >= 1.0 / 64.0:
            cand = Pi + alpha * delta
            cand = (cand + cand.T) / 2
            Fc, Tc = resid(cand)
            norm_c = float(np.max(np.abs(Fc)))
            if norm_c < best_norm:
                Pi, FPi, ThetaBar, best, best_norm, improved = cand, Fc, Tc, cand, norm_c, True
                break
            alpha /= 2
        if not improved:
            break
    if best_norm > tol:
        warnings.warn(
            f"Newton polish of Pi stalled at residual {best_norm:.3e}; "
            "falling back to the saturated value",
            stacklevel=3,
        )
    return best


def solve_ergodic_system(model: MFModel, tol: float = 1e-10) -> ErgodicSolution:
    """Solve the full algebraic cascade and certify the closed loop.

    Raises :class:`SolverError` when any residual exceeds the documented
    budget or a stability certificate is refused; a Sylvester
    spectra-overlap here is reported as a certificate inconsistency
    (it cannot occur when both certificates hold).
    """
    P, Pi = solve_are_pair(model, tol)
    FP, FPi, Theta, ThetaBar, terms = _are_residuals(model, P, Pi)

    d = model.derived
    A, B, C, D, S = model.A, model.B, model.C, model.D, model.S
    b, sigma, q, r = model.b, model.sigma, model.q, model.r
    Acl = A + B @ Theta
    Am = d.Ahat + B @ ThetaBar

    cert_ms = certify_mean_square(Acl, C + D @ Theta)
    cert_mean = certify_hurwitz(Am)
    for cert, label in ((cert_mean, "mean closed loop"), (cert_ms, "centered closed loop")):
        if isinstance(cert, Refusal):
            raise SolverError(f"{label} certificate refused: {cert.reason}")

    # Mixed curvature: Acl^T P1 + P1 Am + G = 0.
    G = C.T @ P @ d.Chat + model.Q - P @ (B @ ThetaBar) + Theta.T @ (D.T @ P @ d.Chat + S)
    try:
        P1 = solve_sylvester(Acl, Am, G)
    except SpectraOverlapError as e:
        raise SolverError(
            "Sylvester solve for P1 is singular although both stability "
            f"certificates hold; certificate inconsistency: {e}"
        ) from e

    # Linear offsets: one solve against each closed-loop matrix.
    rhs_p = (d.Chat + D @ ThetaBar).T @ (P @ sigma) + ThetaBar.T @ r + Pi @ b + q
    p = np.linalg.solve(Am.T, -rhs_p)
    v = B.T @ p + D.T @ (P @ sigma) + r
    theta = -np.linalg.solve(terms.control, v)
    rhs_p1 = (
        P @ b + C.T @ (P @ sigma) + q
        + (P1 - P) @ (B @ theta + b)
        + Theta.T @ (D.T @ (P @ sigma) + r)
    )
    p1 = np.linalg.solve(Acl.T, -rhs_p1)

    # Long-run average cost; vᵀℛ⁻¹v written through thetaed solve above.
    c0 = 2.0 * float(p @ b) + float(sigma @ (P @ sigma)) + float(v @ theta)

    scale = 1.0 + max(
        float(np.linalg.norm(getattr(model, name)))
        for name in ("A", "Abar", "B", "C", "Cbar", "D", "Q", "Qbar", "S", "R")
    ) + float(np.linalg.norm(P)) + float(np.linalg.norm(Pi))
    residuals = {
        "P": float(np.max(np.abs(FP))),
        "Pi": float(np.max(np.abs(FPi))),
        "P1": float(np.max(np.abs(Acl.T @ P1 + P1 @ Am + G))),
        "p": float(np.max(np.abs(Am.T @ p + rhs_p))),
        "p1": float(np.max(np.abs(Acl.T @ p1 + rhs_p1))),
        "gain_Theta": float(np.max(np.abs(terms.control @ Theta + terms.cross))),
        "gain_ThetaBar": float(np.max(np.abs(terms.control @ ThetaBar + terms.mean_cross))),
        "gain_theta": float(np.max(np.abs(terms.control @ theta + v))),
    }
    worst = max(residuals["P"], residuals["Pi"], residuals["P1"],
                residuals["p"], residuals["p1"])
    if worst > ERGODIC_RESIDUAL_TOL * scale:
        raise SolverError(
            f"algebraic system residual {worst:.3e} exceeds "
            f"{ERGODIC_RESIDUAL_TOL:g} * scale ({scale:.3g})"
        )

    return ErgodicSolution(
        model=model, P=P, Pi=Pi, P1=P1, p=p, p1=p1, c0=c0,
        Theta=Theta, ThetaBar=ThetaBar, theta=theta,
        cert_mean=cert_mean, cert_ms=cert_ms, residuals=residuals,
    )


def static_optimum(model: MFModel, erg: ErgodicSolution) -> StaticOptimum:
    """Equality-constrained quadratic program behind the turnpike level.

    KKT solve of  min L(x, u)  s.t.  Ahat x + B u + b = 0, where L is the
    stationary cost including the diffusion penalty <P(Chat x + D u +
    sigma), Chat x + D u + sigma>. Also evaluates how exactly the ergodic
    feedback reproduces the optimizer (see :class:`StaticOptimum`).
    """
    n, m = model.n, model.m
    d = model.derived
    P = erg.P
    B, D = model.B, model.D
    Hxx = 2.0 * (d.Qhat + d.Chat.T @ P @ d.Chat)
    Hux = 2.0 * (model.S + D.T @ P @ d.Chat)
    Huu = 2.0 * (model.R + D.T @ P @ D)
    gx = 2.0 * (model.q + d.Chat.T @ (P @ model.sigma))
    gu = 2.0 * (model.r + D.T @ (P @ model.sigma))

    KKT = np.zeros((n + m + n, n + m + n))
    KKT[:n, :n] = Hxx
    KKT[:n, n:n + m] = Hux.T
    KKT[:n, n + m:] = d.Ahat.T
    KKT[n:n + m, :n] = Hux
    KKT[n:n + m, n:n + m] = Huu
    KKT[n:n + m, n + m:] = B.T
    KKT[n + m:, :n] = d.Ahat
    KKT[n + m:, n:n + m] = B
    rhs = -np.concatenate([gx, gu, model.b])
    try:
        sol = np.linalg.solve(KKT, rhs)
    except np.linalg.LinAlgError as e:
        raise SolverError(f"singular KKT system in the static problem: {e}") from e
    xstar, ustar, mult = sol[:n], sol[n:n + m], sol[n + m:]

    zdiff = d.Chat @ xstar + D @ ustar + model.sigma
    objective = (
        float(xstar @ (d.Qhat @ xstar))
        + 2.0 * float(ustar @ (model.S @ xstar))
        + float(ustar @ (model.R @ ustar))
        + 2.0 * float(model.q @ xstar)
        + 2.0 * float(model.r @ ustar)
        + float(zdiff @ (P @ zdiff))
    )

    constraint = d.Ahat @ xstar + B @ ustar + model.b
    if np.max(np.abs(constraint)) > 1e-10 * (1.0 + np.linalg.norm(model.b)):
        raise SolverError(
            f"static constraint residual {np.max(np.abs(constraint)):.3e} too large"
        )

    Am = d.Ahat + B @ erg.ThetaBar
    x_pred = -np.linalg.solve(Am, B @ erg.theta + model.b)
    gain_resid = float(np.max(np.abs(ustar - (erg.ThetaBar @ xstar + erg.theta))))
    fixed_resid = float(np.max(np.abs(xstar - x_pred)))
    if max(gain_resid, fixed_resid) > 1e-8:
        warnings.warn(
            f"static optimum and ergodic feedback disagree beyond 1e-8 "
            f"(gain {gain_resid:.3e}, fixed point {fixed_resid:.3e})",
            stacklevel=2,
        )
    return StaticOptimum(
        xstar=xstar, ustar=ustar, multiplier=mult, objective=objective,
        gain_identity_residual=gain_resid, fixed_point_residual=fixed_resid,
    )


def bellman_residual(model: MFModel, erg: ErgodicSolution,
                     samples: int = 1000, seed: int = 0) -> float:
    """Max deviation of the stationary Bellman identity over sample points.

    Samples (x, xbar) uniformly from [-5, 5]^{2n} with a seeded generator,
    evaluates the stationary equation's left-hand side at the quadratic
    candidate value function under the ergodic feedback (the law-integral
    term reduces to evaluation at the mean: every integrand is affine),
    and returns max |LHS - c0|. At an exact solution this is round-off.

    The candidate is differentiated literally: since P1 need not be
    symmetric, the xbar-gradient carries P1^T against (x - xbar).
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    n = model.n
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-5.0, 5.0, size=(samples, 2 * n))
    x, xbar = pts[:, :n], pts[:, n:]
    y = x - xbar

    d = model.derived
    P, Pi, P1 = erg.P, erg.Pi, erg.P1
    Theta, ThetaBar, theta = erg.Theta, erg.ThetaBar, erg.theta
    u = y @ Theta.T + xbar @ ThetaBar.T + theta

    drift = x @ model.A.T + xbar @ model.Abar.T + u @ model.B.T + model.b
    diff = x @ model.C.T + xbar @ model.Cbar.T + u @ model.D.T + model.sigma
    grad_x = 2.0 * (y @ P + xbar @ P1.T + erg.p1)
    grad_xbar = 2.0 * (y @ P1 - y @ P + xbar @ (Pi - P1).T + erg.p - erg.p1)
    drift_mean = xbar @ (d.Ahat + model.B @ ThetaBar).T + (model.B @ theta + model.b)

    lhs = (
        np.einsum("si,si->s", drift, grad_x)
        + np.einsum("si,ij,sj->s", diff, P, diff)
        + model.running_cost(x, xbar, u)
        + np.einsum("si,si->s", drift_mean, grad_xbar)
    )
    return float(np.max(np.abs(lhs - erg.c0)))


__all__ = [
    "ErgodicSolution",
    "StaticOptimum",
    "bellman_residual",
    "solve_are_pair",
    "solve_ergodic_system",
    "static_optimum",
]
