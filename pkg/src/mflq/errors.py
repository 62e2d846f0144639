"""Exception taxonomy shared across the package.

The CLI maps these onto its exit codes: problem-file parse failures are
:class:`ProblemFormatError`, model/assumption failures are
:class:`ModelDataError` or :class:`ValidationFailure`, and numerical
failures inside the solvers are :class:`SolverError` (which includes
:class:`SpectraOverlapError`).
"""

from __future__ import annotations


class MFLQError(Exception):
    """Base class for all package-specific errors."""


class ModelDataError(MFLQError, ValueError):
    """Problem data is structurally invalid (dimensions, symmetry, types).

    Carries ``field``, the name of the offending coefficient, when known.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class ProblemFormatError(MFLQError, ValueError):
    """A problem file could not be parsed; ``path`` points at the fault."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(message)
        self.path = path


class ValidationFailure(MFLQError):
    """A standing-assumption check failed for an operation that requires it."""


class SolverError(MFLQError):
    """A numerical solve failed (divergence, loss of definiteness, blow-up)."""


class SpectraOverlapError(SolverError):
    """Sylvester/Lyapunov coefficient spectra overlap; the solve is singular."""
