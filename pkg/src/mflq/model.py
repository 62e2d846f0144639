"""Problem data for mean-field linear-quadratic control.

The controlled state follows

    dX = (A X + Abar E[X] + B u + b) dt + (C X + Cbar E[X] + D u + sigma) dW

with a one-dimensional Brownian motion W, and the running cost is

    f(x, xbar, u) = <Q x, x> + 2 <S x, u> + <R u, u>
                    + 2 <q, x> + 2 <r, u> + <Qbar xbar, xbar>,

where xbar stands for the mean E[X]. :class:`MFModel` carries the sixteen
pieces of data (n, m and the fourteen coefficient arrays), validates their
shapes, and symmetrizes the weight matrices on load.

The solvers never manipulate the raw coefficients directly; they go through
:func:`eval_functionals`, which packages the five composite terms every
Riccati-type equation here is built from.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ModelDataError
from .linalg import sym_eig_min

#: Default strict-positivity margin for the weight assumptions.
DEFAULT_MARGIN = 1e-9

#: Asymmetry up to this is treated as round-off and silently symmetrized.
SYM_TOL = 1e-12

#: Asymmetry between SYM_TOL and this draws a warning; beyond it, an error.
SYM_ERROR = 1e-6

_MATRIX_FIELDS = ("A", "Abar", "B", "C", "Cbar", "D", "Q", "Qbar", "S", "R")
_VECTOR_FIELDS = ("b", "sigma", "q", "r")
COEFFICIENT_FIELDS = _MATRIX_FIELDS + _VECTOR_FIELDS


def _symmetrized(name: str, M: np.ndarray) -> np.ndarray:
    """Return (M + M^T)/2, warning or failing on real asymmetry."""
    skew = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if skew > SYM_ERROR:
        raise ModelDataError(
            f"{name} is not symmetric (max asymmetry {skew:.3e} exceeds {SYM_ERROR:g})",
            field=name,
        )
    if skew > SYM_TOL:
        warnings.warn(
            f"{name} deviates from symmetry by {skew:.3e}; symmetrizing",
            stacklevel=3,
        )
    return (M + M.T) / 2.0


@dataclass(frozen=True)
class DerivedForms:
    """The aggregated coefficients that govern the mean dynamics and cost."""

    Ahat: np.ndarray  # A + Abar
    Chat: np.ndarray  # C + Cbar
    Qhat: np.ndarray  # Q + Qbar


@dataclass(frozen=True)
class RiccatiTerms:
    """The five composite terms entering the Riccati-type equations.

    For given symmetric P (and Pi):

    - ``state``      = P A + A^T P + C^T P C + Q
    - ``mean_state`` = Pi Ahat + Ahat^T Pi + Chat^T P Chat + Qhat
    - ``cross``      = B^T P + D^T P C + S
    - ``mean_cross`` = B^T Pi + D^T P Chat + S
    - ``control``    = R + D^T P D

    ``state`` and ``mean_state`` are returned exactly symmetric.
    """

    state: np.ndarray
    mean_state: np.ndarray
    cross: np.ndarray
    mean_cross: np.ndarray
    control: np.ndarray


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the standing-assumption checks.

    The weight conditions (H1 family) are filled by :func:`validate_h1`.
    The stabilizability conditions are certified a posteriori on computed
    ergodic gains, so ``h2_ode_ok``/``h2_sde_ok`` stay ``None`` until a
    caller (the CLI ``validate`` command) runs the ergodic solve; the
    ``h2_*_gain`` fields then record the certified gains.
    """

    h1_ok: bool
    h1_min_eigs: tuple[float, float]
    r_min_eig: float
    messages: tuple[str, ...]
    h2_ode_ok: bool | None = None
    h2_sde_ok: bool | None = None
    h2_ode_gain: np.ndarray | None = None
    h2_sde_gain: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        """True when every populated check passed."""
        if not self.h1_ok:
            return False
        return self.h2_ode_ok is not False and self.h2_sde_ok is not False


@dataclass(frozen=True)
class MFModel:
    """Validated data of one mean-field LQ problem. Immutable."""

    n: int
    m: int
    A: np.ndarray
    Abar: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Cbar: np.ndarray
    D: np.ndarray
    b: np.ndarray
    sigma: np.ndarray
    Q: np.ndarray
    Qbar: np.ndarray
    S: np.ndarray
    R: np.ndarray
    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n > 0):
            raise ModelDataError(f"n must be a positive integer, got {self.n!r}", field="n")
        if not (isinstance(self.m, int) and self.m > 0):
            raise ModelDataError(f"m must be a positive integer, got {self.m!r}", field="m")
        n, m = self.n, self.m
        shapes = {
            "A": (n, n), "Abar": (n, n), "C": (n, n), "Cbar": (n, n),
            "B": (n, m), "D": (n, m),
            "Q": (n, n), "Qbar": (n, n), "S": (m, n), "R": (m, m),
            "b": (n,), "sigma": (n,), "q": (n,), "r": (m,),
        }
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ModelDataError(
                    f"{name} must have shape {shape}, got {arr.shape}", field=name
                )
            if not np.all(np.isfinite(arr)):
                raise ModelDataError(f"{name} contains non-finite entries", field=name)
            object.__setattr__(self, name, arr)
        for name in ("Q", "Qbar", "R"):
            object.__setattr__(self, name, _symmetrized(name, getattr(self, name)))

    @cached_property
    def derived(self) -> DerivedForms:
        return DerivedForms(
            Ahat=self.A + self.Abar,
            Chat=self.C + self.Cbar,
            Qhat=self.Q + self.Qbar,
        )

    @cached_property
    def fingerprint(self) -> str:
        """Hash of (n, m, coefficients); identifies the problem instance."""
        h = hashlib.sha256(f"{self.n},{self.m}".encode())
        for name in COEFFICIENT_FIELDS:
            h.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        return h.hexdigest()

    def running_cost(self, x: np.ndarray, xbar: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Evaluate f(x, xbar, u); broadcasts over leading axes."""
        x = np.asarray(x, dtype=float)
        xbar = np.asarray(xbar, dtype=float)
        u = np.asarray(u, dtype=float)
        quad_x = np.einsum("...i,ij,...j->...", x, self.Q, x)
        cross = 2.0 * np.einsum("...i,ij,...j->...", u, self.S, x)
        quad_u = np.einsum("...i,ij,...j->...", u, self.R, u)
        lin = 2.0 * (x @ self.q) + 2.0 * (u @ self.r)
        quad_mean = np.einsum("...i,ij,...j->...", xbar, self.Qbar, xbar)
        return quad_x + cross + quad_u + lin + quad_mean

    def to_dict(self) -> dict:
        """Plain-python problem document (row-major nested lists)."""
        doc: dict = {"n": self.n, "m": self.m}
        for name in COEFFICIENT_FIELDS:
            doc[name] = getattr(self, name).tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "MFModel":
        """Build a model from a problem document (see docs/problem_format.md).

        Structural faults raise :class:`~mflq.errors.ProblemFormatError`
        with the JSON path of the offending entry.
        """
        from .errors import ProblemFormatError

        if not isinstance(doc, dict):
            raise ProblemFormatError("problem document must be a JSON object")
        for key in ("n", "m"):
            if key not in doc:
                raise ProblemFormatError(f"missing required key {key!r}", path=f"$.{key}")
            if not isinstance(doc[key], int) or isinstance(doc[key], bool) or doc[key] <= 0:
                raise ProblemFormatError(
                    f"{key} must be a positive integer, got {doc[key]!r}", path=f"$.{key}"
                )
        n, m = doc["n"], doc["m"]
        shapes = {
            "A": (n, n), "Abar": (n, n), "C": (n, n), "Cbar": (n, n),
            "B": (n, m), "D": (n, m),
            "Q": (n, n), "Qbar": (n, n), "S": (m, n), "R": (m, m),
            "b": (n,), "sigma": (n,), "q": (n,), "r": (m,),
        }
        data = {}
        for name, shape in shapes.items():
            if name not in doc:
                raise ProblemFormatError(f"missing coefficient {name!r}", path=f"$.{name}")
            try:
                arr = np.asarray(doc[name], dtype=float)
            except (TypeError, ValueError):
                raise ProblemFormatError(
                    f"{name} is not a numeric array", path=f"$.{name}"
                ) from None
            if arr.shape != shape:
                raise ProblemFormatError(
                    f"{name} must have shape {shape}, got {arr.shape}", path=f"$.{name}"
                )
            data[name] = arr
        return cls(n=n, m=m, **data)


def eval_functionals(model: MFModel, P: np.ndarray, Pi: np.ndarray) -> RiccatiTerms:
    """Evaluate the five composite Riccati terms at (P, Pi).

    P and Pi must be symmetric n-by-n (loose tolerance; integrator stages
    are allowed tiny skew, which is projected out here).
    """
    n = model.n
    P = np.asarray(P, dtype=float)
    Pi = np.asarray(Pi, dtype=float)
    for name, M in (("P", P), ("Pi", Pi)):
        if M.shape != (n, n):
            raise ModelDataError(f"{name} must have shape {(n, n)}", field=name)
        if np.max(np.abs(M - M.T)) > 1e-8 * (1.0 + np.max(np.abs(M))):
            raise ModelDataError(f"{name} must be symmetric", field=name)
    P = (P + P.T) / 2.0
    Pi = (Pi + Pi.T) / 2.0

    d = model.derived
    A, B, C, D = model.A, model.B, model.C, model.D
    state = P @ A + A.T @ P + C.T @ P @ C + model.Q
    mean_state = Pi @ d.Ahat + d.Ahat.T @ Pi + d.Chat.T @ P @ d.Chat + d.Qhat
    cross = B.T @ P + D.T @ P @ C + model.S
    mean_cross = B.T @ Pi + D.T @ P @ d.Chat + model.S
    control = model.R + D.T @ P @ D
    return RiccatiTerms(
        state=(state + state.T) / 2.0,
        mean_state=(mean_state + mean_state.T) / 2.0,
        cross=cross,
        mean_cross=mean_cross,
        control=(control + control.T) / 2.0,
    )


def validate_h1(model: MFModel, margin: float = DEFAULT_MARGIN) -> ValidationReport:
    """Check the weight positivity assumptions.

    Passes iff R, Q - S^T R^{-1} S and Q + Qbar - S^T R^{-1} S all have
    smallest eigenvalue strictly greater than ``margin``. R is checked
    first; when it fails, the Schur-complement eigenvalues are reported
    as NaN (they are not defined without R^{-1}).
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    messages: list[str] = []
    r_min = sym_eig_min(model.R)
    if r_min <= margin:
        messages.append(
            f"R is not positive definite beyond margin ({r_min:.6g} <= {margin:g})"
        )
        return ValidationReport(
            h1_ok=False,
            h1_min_eigs=(float("nan"), float("nan")),
            r_min_eig=r_min,
            messages=tuple(messages),
        )

    schur = model.S.T @ np.linalg.solve(model.R, model.S)
    e_q = sym_eig_min(model.Q - schur)
    e_qhat = sym_eig_min(model.derived.Qhat - schur)
    ok = e_q > margin and e_qhat > margin
    if e_q <= margin:
        messages.append(f"Q - S^T R^-1 S fails positivity ({e_q:.6g} <= {margin:g})")
    if e_qhat <= margin:
        messages.append(
            f"Q + Qbar - S^T R^-1 S fails positivity ({e_qhat:.6g} <= {margin:g})"
        )
    if ok:
        messages.append("weight conditions hold")
    return ValidationReport(
        h1_ok=ok,
        h1_min_eigs=(e_q, e_qhat),
        r_min_eig=r_min,
        messages=tuple(messages),
    )


__all__ = [
    "COEFFICIENT_FIELDS",
    "DEFAULT_MARGIN",
    "DerivedForms",
    "MFModel",
    "RiccatiTerms",
    "ValidationReport",
    "eval_functionals",
    "validate_h1",
]
