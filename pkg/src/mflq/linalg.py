"""Dense linear-algebra services for the Riccati solvers.

Sylvester/Lyapunov equations are solved by Kronecker vectorization: the
matrix equation is flattened (row-major) into a dense ``(k*l) x (k*l)``
linear system and solved with partial pivoting. That is O((kl)^3), which
is perfectly acceptable at the dimensions this package targets (n of a
few, not a few hundred) and has no structural blind spots.

Stability is certified constructively: a matrix is accepted as Hurwitz
(or a pair as mean-square stable) only when the associated Lyapunov
identity produces a symmetric positive-definite witness. No nonsymmetric
eigenvalue computation is ever consulted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError, SpectraOverlapError

#: Condition-number threshold above which a Kronecker system is declared
#: numerically singular (overlapping spectra).
COND_LIMIT = 1e12

#: Residual budget for certificates, relative to the input scale.
CERT_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class StabilityCertificate:
    """Constructive proof of stability.

    ``kind`` is ``"hurwitz"`` or ``"mean_square"``; ``witness`` is the
    symmetric positive-definite solution of the defining Lyapunov
    identity, ``residual`` the max-norm of that identity's residual and
    ``witness_min_eig`` the smallest witness eigenvalue (> 0).
    """

    kind: str
    witness: np.ndarray
    residual: float
    witness_min_eig: float

    @property
    def ok(self) -> bool:
        return True


@dataclass(frozen=True)
class Refusal:
    """Certification declined. Not an error: callers decide what it means.

    ``witness_min_eig`` carries the smallest eigenvalue of the candidate
    witness when one was computed (None when the solve itself failed).
    """

    kind: str
    reason: str
    witness_min_eig: float | None = None

    @property
    def ok(self) -> bool:
        return False


def _as_square(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def _solve_checked(K: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """Solve K x = rhs, refusing ill-conditioned systems.

    The condition estimate is the exact 1-norm condition number (the
    systems here are small enough to invert outright).
    """
    try:
        cond = np.linalg.cond(K, 1)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SpectraOverlapError(
            f"{what}: coefficient spectra overlap or nearly overlap "
            f"(condition estimate {cond:.3e} exceeds {COND_LIMIT:.0e})"
        )
    return np.linalg.solve(K, rhs)


def solve_sylvester(A1: np.ndarray, A2: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Solve ``A1^T X + X A2 + C = 0`` for the k-by-l matrix X.

    Solvable iff A1^T and -A2 share no eigenvalue; overlap is detected
    through the conditioning of the Kronecker system and reported as
    :class:`SpectraOverlapError`.
    """
    A1 = _as_square(A1, "A1")
    A2 = _as_square(A2, "A2")
    C = np.asarray(C, dtype=float)
    k, l = A1.shape[0], A2.shape[0]
    if C.shape != (k, l):
        raise ValueError(f"C must have shape {(k, l)}, got {C.shape}")

    # Row-major vec: vec(A1^T X) = (A1^T ⊗ I) vec(X), vec(X A2) = (I ⊗ A2^T) vec(X).
    K = np.kron(A1.T, np.eye(l)) + np.kron(np.eye(k), A2.T)
    x = _solve_checked(K, -C.reshape(-1), "sylvester solve")
    X = x.reshape(k, l)

    resid = np.max(np.abs(A1.T @ X + X @ A2 + C))
    if resid > 1e-10 * (1.0 + np.linalg.norm(C)):
        raise SolverError(
            f"sylvester residual {resid:.3e} exceeds tolerance; "
            "system is too ill-conditioned to trust"
        )
    return X


def solve_lyapunov(M: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Solve ``M^T P + P M + W = 0`` for symmetric P (W symmetric)."""
    M = _as_square(M, "M")
    W = _as_square(W, "W")
    if W.shape != M.shape:
        raise ValueError(f"W must have shape {M.shape}, got {W.shape}")
    if np.max(np.abs(W - W.T)) > 1e-10 * (1.0 + np.max(np.abs(W))):
        raise ValueError("W must be symmetric")

    P = solve_sylvester(M, M, W)
    # The exact solution is symmetric; discard the round-off skew part.
    return (P + P.T) / 2.0


def solve_ms_lyapunov(M: np.ndarray, N: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Solve ``M^T P + P M + N^T P N + W = 0`` for symmetric P.

    This is the Lyapunov identity of the scalar-noise linear SDE
    dX = M X dt + N X dW; a positive-definite solution for W = I
    certifies mean-square exponential stability.
    """
    M = _as_square(M, "M")
    N = _as_square(N, "N")
    W = _as_square(W, "W")
    n = M.shape[0]
    if N.shape != (n, n) or W.shape != (n, n):
        raise ValueError("M, N, W must share one square shape")

    I = np.eye(n)
    K = np.kron(M.T, I) + np.kron(I, M.T) + np.kron(N.T, N.T)
    p = _solve_checked(K, -W.reshape(-1), "mean-square lyapunov solve")
    P = p.reshape(n, n)
    P = (P + P.T) / 2.0

    resid = np.max(np.abs(M.T @ P + P @ M + N.T @ P @ N + W))
    if resid > 1e-10 * (1.0 + np.linalg.norm(W)):
        raise SolverError(f"mean-square lyapunov residual {resid:.3e} too large")
    return P


def sym_eig_min(M: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    M = _as_square(M, "M")
    if np.max(np.abs(M - M.T)) > 1e-8 * (1.0 + np.max(np.abs(M))):
        raise ValueError("sym_eig_min requires a symmetric matrix")
    return float(np.linalg.eigvalsh((M + M.T) / 2.0)[0])


def _certificate(kind: str, identity_residual: float, scale: float,
                 P: np.ndarray) -> StabilityCertificate | Refusal:
    min_eig = float(np.linalg.eigvalsh(P)[0])
    if min_eig <= 0.0:
        return Refusal(kind, "witness is not positive definite",
                       witness_min_eig=min_eig)
    if identity_residual > CERT_RESIDUAL_TOL * (1.0 + scale):
        return Refusal(kind, f"identity residual {identity_residual:.3e} too large",
                       witness_min_eig=min_eig)
    return StabilityCertificate(kind, P, identity_residual, min_eig)


def certify_hurwitz(M: np.ndarray) -> StabilityCertificate | Refusal:
    """Certify that M is Hurwitz via the witness of M^T P + P M + I = 0.

    Returns a :class:`StabilityCertificate` when the witness is symmetric
    positive definite, a :class:`Refusal` otherwise. A refusal is a value,
    not an exception; a singular Lyapunov solve also refuses (eigenvalues
    on the imaginary axis make the witness undefined).
    """
    M = _as_square(M, "M")
    n = M.shape[0]
    try:
        P = solve_lyapunov(M, np.eye(n))
    except (SpectraOverlapError, SolverError) as e:
        return Refusal("hurwitz", str(e))
    resid = float(np.max(np.abs(M.T @ P + P @ M + np.eye(n))))
    return _certificate("hurwitz", resid, float(np.linalg.norm(M)), P)


def certify_mean_square(M: np.ndarray, N: np.ndarray) -> StabilityCertificate | Refusal:
    """Certify mean-square stability of dX = M X dt + N X dW.

    Succeeds iff M^T P + P M + N^T P N + I = 0 has a symmetric
    positive-definite solution P, which is then the witness.
    """
    M = _as_square(M, "M")
    N = _as_square(N, "N")
    n = M.shape[0]
    try:
        P = solve_ms_lyapunov(M, N, np.eye(n))
    except (SpectraOverlapError, SolverError) as e:
        return Refusal("mean_square", str(e))
    resid = float(np.max(np.abs(M.T @ P + P @ M + N.T @ P @ N + np.eye(n))))
    scale = float(np.linalg.norm(M) + np.linalg.norm(N))
    return _certificate("mean_square", resid, scale, P)
