"""Closed-loop moment propagation and reproducible Monte Carlo.

Under the optimal feedback the state solves a linear mean-field SDE

    dX = (A1(t) X + A2(t) E[X] + beta(t)) dt
       + (C1(t) X + C2(t) E[X] + gamma(t)) dW,

and because the interaction enters only through E[X], the mean obeys a
closed deterministic ODE. The simulator exploits this: E[X] is computed
by RK4 and injected into the per-path dynamics, which makes paths
independent, exact in law, and embarrassingly parallel. A particle mode
(empirical mean, synchronized stepping) exists purely as a validation
route.

Second moments also obey a closed ODE (one Ito expansion away; the
derivation is written out in docs/moment_odes.md), which is what the
turnpike experiments and the Monte Carlo acceptance checks use as their
deterministic oracle. The coupled finite/ergodic pair driven by one
Brownian motion is handled as a stacked 2n-dimensional system of the
same shape.

Reproducibility contract: one Philox substream per path, keyed by
(master seed, path index), with the step index as the counter position;
Gaussians come from the Box-Muller cosine transform (rejection-free, one
draw per uniform pair). Ensembles are bit-identical for any worker
count: the block partition of paths is fixed, every block writes only
its own slice, and reductions happen after simulation in index order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError
from .model import MFModel
from .riccati_ergodic import ErgodicSolution
from .riccati_finite import FiniteHorizonSolution

#: Paths per simulation block (fixed: the partition must not depend on
#: the worker count, or bit-identity across thread counts would break).
BLOCK_SIZE = 512

#: State magnitude treated as divergence (caught at report knots, far
#: below the float ceiling so no overflow warnings fire first).
_STATE_CAP = 1e100


@dataclass(frozen=True)
class ClosedLoopSpec:
    """A model under one of its optimal feedbacks, started at x0."""

    model: MFModel
    solution: FiniteHorizonSolution | ErgodicSolution
    x0: np.ndarray

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.model.n,):
            raise ValueError(f"x0 must have shape ({self.model.n},), got {x0.shape}")
        object.__setattr__(self, "x0", x0)
        if self.solution.model.fingerprint != self.model.fingerprint:
            raise ValueError("solution was computed for a different model")

    @property
    def is_finite(self) -> bool:
        return isinstance(self.solution, FiniteHorizonSolution)

    def check_times(self, times: np.ndarray):
        if self.is_finite:
            T = self.solution.T
            if times[0] < -1e-12 or times[-1] > T + 1e-12:
                raise ValueError(f"grid must lie within [0, {T}] in finite mode")
        elif times[0] < -1e-12:
            raise ValueError("grid must start at t >= 0")


@dataclass(frozen=True)
class MomentPath:
    """First and second moments of one closed-loop process on a grid."""

    grid: np.ndarray
    mean: np.ndarray    # (K+1, d)
    second: np.ndarray  # (K+1, d, d)


@dataclass(frozen=True)
class PairMomentPath:
    """Moments of the coupled (finite, ergodic) pair plus gap series.

    ``mean``/``second`` are for the stacked state (X_finite, X_ergodic)
    in dimension 2n; ``state_gap`` is E|X_fin - X_erg|^2 and
    ``control_gap`` is E|u_fin - u_erg|^2, both per grid point.
    """

    grid: np.ndarray
    mean: np.ndarray
    second: np.ndarray
    state_gap: np.ndarray
    control_gap: np.ndarray


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Monte Carlo paths with everything needed to re-run them exactly."""

    grid: np.ndarray
    paths: int
    states: np.ndarray    # (paths, K+1, d)
    controls: np.ndarray  # (paths, K+1, c)
    mean: np.ndarray      # injected (or empirical) mean path, (K+1, d)
    seed: int
    metadata: dict = field(compare=False)


@dataclass(frozen=True)
class CostEstimate:
    """Monte Carlo cost integral and its time average."""

    value: float                # estimate of the total expected cost
    cesaro: float               # value / horizon span
    stderr: float               # standard error of ``value``
    running_mean: np.ndarray    # sample-mean running cost per grid point


def _gain_arrays(solution, times: np.ndarray):
    """(Theta, ThetaBar, theta) evaluated at each time; vectorized."""
    if isinstance(solution, ErgodicSolution):
        L = len(times)
        return (
            np.broadcast_to(solution.Theta, (L, *solution.Theta.shape)),
            np.broadcast_to(solution.ThetaBar, (L, *solution.ThetaBar.shape)),
            np.broadcast_to(solution.theta, (L, *solution.theta.shape)),
        )
    grid = solution.grid
    idx = np.clip(np.searchsorted(grid, times, side="right") - 1, 0, len(grid) - 2)
    h = grid[idx + 1] - grid[idx]
    w = np.clip((times - grid[idx]) / h, 0.0, 1.0)
    wm = w[:, None, None]
    wv = w[:, None]
    Theta = (1 - wm) * solution.Theta[idx] + wm * solution.Theta[idx + 1]
    ThetaBar = (1 - wm) * solution.ThetaBar[idx] + wm * solution.ThetaBar[idx + 1]
    theta = (1 - wv) * solution.theta[idx] + wv * solution.theta[idx + 1]
    return Theta, ThetaBar, theta


def _closed_loop_coeffs(model: MFModel, solution, times: np.ndarray):
    """Per-time closed-loop coefficients (A1, A2, beta, C1, C2, gamma)."""
    Theta, ThetaBar, theta = _gain_arrays(solution, times)
    B, D = model.B, model.D
    BTheta = B @ Theta          # (L, n, n) via broadcasting matmul
    DTheta = D @ Theta
    A1 = model.A + BTheta
    A2 = model.Abar + B @ ThetaBar - BTheta
    C1 = model.C + DTheta
    C2 = model.Cbar + D @ ThetaBar - DTheta
    beta = theta @ B.T + model.b
    gamma = theta @ D.T + model.sigma
    return A1, A2, beta, C1, C2, gamma


def _pair_coeffs(model: MFModel, finite: FiniteHorizonSolution,
                 erg: ErgodicSolution, times: np.ndarray):
    """Stacked 2n coefficients of the coupled pair (same Brownian motion)."""
    n = model.n
    cf = _closed_loop_coeffs(model, finite, times)
    ce = _closed_loop_coeffs(model, erg, times)
    L = len(times)

    def blockdiag(Mf, Me):
        out = np.zeros((L, 2 * n, 2 * n))
        out[:, :n, :n] = Mf
        out[:, n:, n:] = Me
        return out

    A1 = blockdiag(cf[0], ce[0])
    A2 = blockdiag(cf[1], ce[1])
    C1 = blockdiag(cf[3], ce[3])
    C2 = blockdiag(cf[4], ce[4])
    beta = np.concatenate([cf[2], ce[2]], axis=1)
    gamma = np.concatenate([cf[5], ce[5]], axis=1)
    return A1, A2, beta, C1, C2, gamma


def _rk4_moments(coeffs_at, x0: np.ndarray, grid: np.ndarray,
                 with_second: bool):
    """RK4 for the closed mean (and optionally second-moment) ODEs."""
    K = len(grid) - 1
    d = len(x0)
    knots = coeffs_at(grid)
    mids = coeffs_at((grid[:-1] + grid[1:]) / 2.0)

    mean = np.empty((K + 1, d))
    mean[0] = x0
    second = np.empty((K + 1, d, d)) if with_second else None
    if with_second:
        second[0] = np.outer(x0, x0)

    def f(c, j, M, Y):
        A1, A2, beta, C1, C2, gamma = (a[j] for a in c)
        alpha = A2 @ M + beta
        dM = A1 @ M + alpha
        if Y is None:
            return dM, None
        g = C2 @ M + gamma
        C1M = C1 @ M
        dY = (
            A1 @ Y + Y @ A1.T
            + np.outer(alpha, M) + np.outer(M, alpha)
            + C1 @ Y @ C1.T
            + np.outer(C1M, g) + np.outer(g, C1M)
            + np.outer(g, g)
        )
        return dM, (dY + dY.T) / 2.0

    M = x0.copy()
    Y = np.outer(x0, x0) if with_second else None
    for k in range(K):
        h = grid[k + 1] - grid[k]
        k1M, k1Y = f(knots, k, M, Y)
        k2M, k2Y = f(mids, k, M + (h / 2) * k1M, None if Y is None else Y + (h / 2) * k1Y)
        k3M, k3Y = f(mids, k, M + (h / 2) * k2M, None if Y is None else Y + (h / 2) * k2Y)
        k4M, k4Y = f(knots, k + 1, M + h * k3M, None if Y is None else Y + h * k3Y)
        M = M + (h / 6) * (k1M + 2 * k2M + 2 * k3M + k4M)
        if Y is not None:
            Y = Y + (h / 6) * (k1Y + 2 * k2Y + 2 * k3Y + k4Y)
            Y = (Y + Y.T) / 2.0
            second[k + 1] = Y
        mean[k + 1] = M
    return mean, second


def propagate_mean(spec: ClosedLoopSpec, grid: np.ndarray) -> np.ndarray:
    """Deterministic mean path E[X(t)] on the grid (RK4)."""
    grid = np.asarray(grid, dtype=float)
    spec.check_times(grid)
    coeffs_at = lambda ts: _closed_loop_coeffs(spec.model, spec.solution, ts)
    mean, _ = _rk4_moments(coeffs_at, spec.x0, grid, with_second=False)
    return mean


def propagate_moments(spec: ClosedLoopSpec, grid: np.ndarray) -> MomentPath:
    """Mean and second moment E[X X^T] of one closed-loop process.

    The covariance second(t) - mean(t) mean(t)^T must stay PSD; a drop
    below -1e-9 in its smallest eigenvalue raises :class:`SolverError`
    (it would mean the propagation itself went wrong).
    """
    grid = np.asarray(grid, dtype=float)
    spec.check_times(grid)
    coeffs_at = lambda ts: _closed_loop_coeffs(spec.model, spec.solution, ts)
    mean, second = _rk4_moments(coeffs_at, spec.x0, grid, with_second=True)
    _check_covariance(grid, mean, second)
    return MomentPath(grid=grid, mean=mean, second=second)


def _check_covariance(grid, mean, second):
    cov = second - mean[:, :, None] * mean[:, None, :]
    cov = (cov + np.swapaxes(cov, 1, 2)) / 2.0
    min_eig = float(np.min(np.linalg.eigvalsh(cov)))
    if min_eig < -1e-9:
        raise SolverError(
            f"covariance lost positive semidefiniteness (min eigenvalue "
            f"{min_eig:.3e}); moment propagation is unreliable on this grid"
        )


def propagate_pair_moments(
    model: MFModel,
    finite: FiniteHorizonSolution,
    erg: ErgodicSolution,
    x0_finite: np.ndarray,
    x0_erg: np.ndarray,
    grid: np.ndarray,
) -> PairMomentPath:
    """Exact moments of the coupled pair and the two deviation series.

    The finite-horizon and ergodic closed loops are driven by the same
    scalar Brownian motion; the stacked state is one linear mean-field
    SDE in dimension 2n whose first/second moments close. From those,
    E|X_fin - X_erg|^2 and E|u_fin - u_erg|^2 are exact algebra: the
    control difference is affine in the stacked state and its mean.
    """
    for sol, who in ((finite, "finite"), (erg, "ergodic")):
        if sol.model.fingerprint != model.fingerprint:
            raise ValueError(f"{who} solution belongs to a different model")
    grid = np.asarray(grid, dtype=float)
    if grid[0] < -1e-12 or grid[-1] > finite.T + 1e-12:
        raise ValueError(f"grid must lie within [0, {finite.T}]")
    n = model.n
    x0_finite = np.asarray(x0_finite, dtype=float).reshape(n)
    x0_erg = np.asarray(x0_erg, dtype=float).reshape(n)

    coeffs_at = lambda ts: _pair_coeffs(model, finite, erg, ts)
    z0 = np.concatenate([x0_finite, x0_erg])
    mean, second = _rk4_moments(coeffs_at, z0, grid, with_second=True)
    _check_covariance(grid, mean, second)

    # E|X_f - X_e|^2 = tr(J Y J^T) + |J M|^2-free form with J = [I, -I].
    Y11 = second[:, :n, :n]
    Y12 = second[:, :n, n:]
    Y22 = second[:, n:, n:]
    state_gap = np.trace(Y11 - Y12 - np.swapaxes(Y12, 1, 2) + Y22, axis1=1, axis2=2)

    Tf, TBf, thf = _gain_arrays(finite, grid)
    L = len(grid)
    G = np.concatenate([Tf, np.broadcast_to(-erg.Theta, (L, *erg.Theta.shape))], axis=2)
    g = (
        np.einsum("kij,kj->ki", TBf - Tf, mean[:, :n])
        - mean[:, n:] @ (erg.ThetaBar - erg.Theta).T
        + thf - erg.theta
    )
    GY = np.einsum("kij,kjl->kil", G, second)
    quad = np.einsum("kil,kil->k", GY, G)
    lin = 2.0 * np.einsum("ki,kij,kj->k", g, G, mean)
    control_gap = quad + lin + np.einsum("ki,ki->k", g, g)

    # Clip the tiny negative round-off a squared quantity can pick up.
    state_gap = np.maximum(state_gap, 0.0)
    control_gap = np.maximum(control_gap, 0.0)
    return PairMomentPath(grid=grid, mean=mean, second=second,
                          state_gap=state_gap, control_gap=control_gap)


def _path_normals(seed: int, path: int, count: int) -> np.ndarray:
    """Standard normals for one path substream (documented scheme).

    Philox (4x64) keyed by (seed, path index); the j-th step consumes the
    j-th uniform pair of the stream. Box-Muller cosine form with u1
    mapped to (0, 1] so the log never sees zero.
    """
    key = np.array([np.uint64(seed % (1 << 64)), np.uint64(path)], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    u = gen.random((count, 2))
    return np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])


def _fine_grid(grid: np.ndarray, substeps: int) -> np.ndarray:
    """Each report interval subdivided into ``substeps`` equal pieces."""
    if substeps == 1:
        return grid
    pieces = [
        np.linspace(grid[k], grid[k + 1], substeps, endpoint=False)
        for k in range(len(grid) - 1)
    ]
    return np.concatenate(pieces + [grid[-1:]])


def simulate(
    spec: ClosedLoopSpec,
    grid: np.ndarray,
    paths: int,
    seed: int,
    *,
    substeps: int = 1,
    workers: int = 1,
    particle: bool = False,
) -> TrajectoryEnsemble:
    """Euler-Maruyama ensemble of the closed-loop mean-field SDE.

    The mean-field input E[X] is the RK4 mean path (exact decoupling for
    linear dynamics), evaluated on the internally refined grid when
    ``substeps > 1``. With ``particle=True`` the empirical mean of the
    ensemble replaces the ODE mean (synchronized stepping, single
    worker); that mode exists to validate the decoupling, not for
    production runs.

    Bit-identical for fixed (seed, paths, grid, substeps) regardless of
    ``workers``.
    """
    grid = np.asarray(grid, dtype=float)
    if paths < 1:
        raise ValueError("paths must be a positive integer")
    if substeps < 1:
        raise ValueError("substeps must be a positive integer")
    if len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with >= 2 points")
    spec.check_times(grid)
    if particle and workers != 1:
        raise ValueError("particle mode is synchronized; it requires workers=1")

    model = spec.model
    n = model.n
    fine = _fine_grid(grid, substeps)
    F = len(fine)
    dts = np.diff(fine)
    report_idx = np.arange(0, F, substeps)

    A1, A2, beta, C1, C2, gamma = _closed_loop_coeffs(model, spec.solution, fine)

    states = np.empty((paths, len(grid), n))
    if particle:
        mean_used = _simulate_particle(spec.x0, states, A1, A2, beta, C1, C2, gamma,
                                       dts, report_idx, paths, seed)
    else:
        mean_fine, _ = _rk4_moments(
            lambda ts: _closed_loop_coeffs(model, spec.solution, ts),
            spec.x0, fine, with_second=False,
        )
        # Fold the deterministic mean into per-step affine terms.
        drift_aff = np.einsum("kij,kj->ki", A2, mean_fine) + beta
        diff_aff = np.einsum("kij,kj->ki", C2, mean_fine) + gamma
        _run_blocks(spec.x0, states, A1, drift_aff, C1, diff_aff,
                    dts, report_idx, paths, seed, workers, fine)
        mean_used = mean_fine[report_idx]

    Theta, ThetaBar, theta = _gain_arrays(spec.solution, grid)
    centered = states - mean_used[None, :, :]
    controls = (
        np.einsum("pkj,kij->pki", centered, Theta)
        + np.einsum("kj,kij->ki", mean_used, ThetaBar)[None]
        + theta[None]
    )

    meta = {
        "scheme": "euler-maruyama",
        "substeps": int(substeps),
        "rng": "philox4x64, key=(seed, path_index), counter=step position",
        "gaussian": "box-muller cosine form on (0,1] uniforms",
        "mode": "finite" if spec.is_finite else "ergodic",
        "mean_source": "particle" if particle else "ode",
        "step": float(np.max(dts)),
        "model_fingerprint": model.fingerprint,
    }
    return TrajectoryEnsemble(grid=grid, paths=paths, states=states,
                              controls=controls, mean=mean_used,
                              seed=int(seed), metadata=meta)


def _run_blocks(x0, states, A1, drift_aff, C1, diff_aff, dts, report_idx,
                paths, seed, workers, fine):
    """Simulate fixed-size path blocks, possibly on a thread pool."""
    blocks = [(s, min(s + BLOCK_SIZE, paths)) for s in range(0, paths, BLOCK_SIZE)]

    def run(block):
        lo, hi = block
        _euler_block(x0, states, lo, hi, A1, drift_aff, C1, diff_aff,
                     dts, report_idx, seed, fine)

    if workers == 1:
        for blk in blocks:
            run(blk)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, blocks))


def _euler_block(x0, states, lo, hi, A1, drift_aff, C1, diff_aff, dts,
                 report_idx, seed, fine):
    width = hi - lo
    steps = len(dts)
    Z = np.empty((width, steps))
    for i in range(width):
        Z[i] = _path_normals(seed, lo + i, steps)

    X = np.tile(x0, (width, 1))
    states[lo:hi, 0] = X
    out = 1
    next_report = report_idx[out] if out < len(report_idx) else -1
    for j in range(steps):
        dt = dts[j]
        sq = math.sqrt(dt)
        X = (
            X
            + dt * (X @ A1[j].T + drift_aff[j])
            + (sq * Z[:, j])[:, None] * (X @ C1[j].T + diff_aff[j])
        )
        if j + 1 == next_report:
            # Abort well below the float ceiling so the divergence is
            # caught before arithmetic starts overflowing.
            good = np.isfinite(X).all(axis=1) & (np.abs(X).max(axis=1) < _STATE_CAP)
            if not np.all(good):
                bad = lo + int(np.argmax(~good))
                raise SolverError(
                    f"path {bad} diverged (non-finite or beyond "
                    f"{_STATE_CAP:.0e}) by t={fine[j + 1]:.6g}"
                )
            states[lo:hi, out] = X
            out += 1
            next_report = report_idx[out] if out < len(report_idx) else -1


def _simulate_particle(x0, states, A1, A2, beta, C1, C2, gamma, dts,
                       report_idx, paths, seed):
    """Synchronized particle system: empirical mean replaces the ODE mean."""
    steps = len(dts)
    Z = np.empty((paths, steps))
    for i in range(paths):
        Z[i] = _path_normals(seed, i, steps)

    X = np.tile(x0, (paths, 1))
    states[:, 0] = X
    means = [X.mean(axis=0)]
    out = 1
    next_report = report_idx[out] if out < len(report_idx) else -1
    for j in range(steps):
        dt = dts[j]
        sq = math.sqrt(dt)
        M = X.mean(axis=0)
        X = (
            X
            + dt * (X @ A1[j].T + (A2[j] @ M + beta[j]))
            + (sq * Z[:, j])[:, None] * (X @ C1[j].T + (C2[j] @ M + gamma[j]))
        )
        if j + 1 == next_report:
            if not np.all(np.isfinite(X)) or np.abs(X).max() >= _STATE_CAP:
                raise SolverError(f"particle system diverged by step {j + 1}")
            states[:, out] = X
            means.append(X.mean(axis=0))
            out += 1
            next_report = report_idx[out] if out < len(report_idx) else -1
    return np.stack(means)


def simulate_pair(
    model: MFModel,
    finite: FiniteHorizonSolution,
    erg: ErgodicSolution,
    x0_finite: np.ndarray,
    x0_erg: np.ndarray,
    grid: np.ndarray,
    paths: int,
    seed: int,
    *,
    substeps: int = 1,
    workers: int = 1,
) -> TrajectoryEnsemble:
    """Coupled simulation of both closed loops under one Brownian motion.

    States are stacked as (X_finite, X_ergodic) in dimension 2n and
    controls as (u_finite, u_ergodic); the j-th Gaussian increment of a
    path drives both components, which is exactly the coupling the
    deviation analysis assumes. Means are injected from the two mean
    ODEs (stacked).
    """
    grid = np.asarray(grid, dtype=float)
    if grid[0] < -1e-12 or grid[-1] > finite.T + 1e-12:
        raise ValueError(f"grid must lie within [0, {finite.T}]")
    if paths < 1:
        raise ValueError("paths must be a positive integer")
    n, m = model.n, model.m
    fine = _fine_grid(grid, substeps)
    dts = np.diff(fine)
    report_idx = np.arange(0, len(fine), substeps)

    A1, A2, beta, C1, C2, gamma = _pair_coeffs(model, finite, erg, fine)
    z0 = np.concatenate([
        np.asarray(x0_finite, dtype=float).reshape(n),
        np.asarray(x0_erg, dtype=float).reshape(n),
    ])
    mean_fine, _ = _rk4_moments(lambda ts: _pair_coeffs(model, finite, erg, ts),
                                z0, fine, with_second=False)
    drift_aff = np.einsum("kij,kj->ki", A2, mean_fine) + beta
    diff_aff = np.einsum("kij,kj->ki", C2, mean_fine) + gamma

    states = np.empty((paths, len(grid), 2 * n))
    _run_blocks(z0, states, A1, drift_aff, C1, diff_aff, dts, report_idx,
                paths, seed, workers, fine)
    mean_used = mean_fine[report_idx]

    Tf, TBf, thf = _gain_arrays(finite, grid)
    Te, TBe, the = _gain_arrays(erg, grid)
    ctr_f = states[:, :, :n] - mean_used[None, :, :n]
    ctr_e = states[:, :, n:] - mean_used[None, :, n:]
    u_f = (np.einsum("pkj,kij->pki", ctr_f, Tf)
           + np.einsum("kj,kij->ki", mean_used[:, :n], TBf)[None] + thf[None])
    u_e = (np.einsum("pkj,kij->pki", ctr_e, Te)
           + np.einsum("kj,kij->ki", mean_used[:, n:], TBe)[None] + the[None])
    controls = np.concatenate([u_f, u_e], axis=2)

    meta = {
        "scheme": "euler-maruyama",
        "substeps": int(substeps),
        "rng": "philox4x64, key=(seed, path_index), counter=step position",
        "gaussian": "box-muller cosine form on (0,1] uniforms",
        "mode": "pair",
        "mean_source": "ode",
        "step": float(np.max(dts)),
        "model_fingerprint": model.fingerprint,
        "stacking": f"first {n} state components finite, last {n} ergodic; "
                    f"controls likewise with width {m} each",
    }
    return TrajectoryEnsemble(grid=grid, paths=paths, states=states,
                              controls=controls, mean=mean_used,
                              seed=int(seed), metadata=meta)


def _running_costs(model: MFModel, ens: TrajectoryEnsemble) -> np.ndarray:
    """Running cost per (path, grid point), mean taken from the ensemble."""
    if ens.states.shape[2] != model.n or ens.controls.shape[2] != model.m:
        raise ValueError("ensemble dimensions do not match the model "
                         "(pair ensembles are not costable directly)")
    xbar = np.broadcast_to(ens.mean, ens.states.shape)
    return model.running_cost(ens.states, xbar, ens.controls)


def path_costs(model: MFModel, ens: TrajectoryEnsemble) -> np.ndarray:
    """Per-path trapezoid cost totals, in path order."""
    f = _running_costs(model, ens)
    dt = np.diff(ens.grid)
    return ((f[:, 1:] + f[:, :-1]) / 2.0) @ dt


def estimate_cost(model: MFModel, ens: TrajectoryEnsemble) -> CostEstimate:
    """Trapezoid Monte Carlo estimate of the expected cost integral.

    The mean argument of the running cost is the ensemble's injected
    mean path. The standard error is that of the per-path trapezoid
    totals (independent paths).
    """
    f = _running_costs(model, ens)
    dt = np.diff(ens.grid)
    per_path = ((f[:, 1:] + f[:, :-1]) / 2.0) @ dt
    value = float(per_path.mean())
    stderr = float(per_path.std(ddof=1) / math.sqrt(ens.paths)) if ens.paths > 1 else 0.0
    span = float(ens.grid[-1] - ens.grid[0])
    return CostEstimate(
        value=value,
        cesaro=value / span,
        stderr=stderr,
        running_mean=f.mean(axis=0),
    )


def ergodic_fixed_point(model: MFModel, erg: ErgodicSolution) -> np.ndarray:
    """The mean the ergodic closed loop settles at."""
    Am = model.derived.Ahat + model.B @ erg.ThetaBar
    return -np.linalg.solve(Am, model.B @ erg.theta + model.b)


__all__ = [
    "BLOCK_SIZE",
    "ClosedLoopSpec",
    "CostEstimate",
    "MomentPath",
    "PairMomentPath",
    "TrajectoryEnsemble",
    "ergodic_fixed_point",
    "estimate_cost",
    "path_costs",
    "propagate_mean",
    "propagate_moments",
    "propagate_pair_moments",
    "simulate",
    "simulate_pair",
]
