"""Linear-quadratic mean-field control: solvers, simulation, turnpike tools.

The package solves the optimal control problem for linear dynamics whose
drift, diffusion, and quadratic cost all involve the state's expectation,
over a finite horizon (backward matrix differential equations) and in
the long-run average sense (algebraic stationary system with an ergodic
constant), then measures how the two regimes meet: the finite-horizon
solution hugs the stationary one away from the ends of the time window.

Entry points:

* :func:`load_problem` / :class:`MFModel` - problem data.
* :func:`validate_h1` - solvability hypotheses with margins.
* :func:`integrate_riccati_system` / :func:`value_function` - finite horizon.
* :func:`solve_ergodic_system` / :func:`bellman_residual` - stationary regime.
* :func:`simulate` / :func:`estimate_cost` - reproducible Monte Carlo.
* :func:`gain_convergence` / :func:`pair_deviation` /
  :func:`cesaro_convergence` - turnpike experiments.

The ``mflq`` command exposes the same functionality from the shell.
"""

from .errors import (
    MFLQError,
    ModelDataError,
    ProblemFormatError,
    SolverError,
    SpectraOverlapError,
    ValidationFailure,
)
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
from .mfsim import (
    ClosedLoopSpec,
    CostEstimate,
    MomentPath,
    PairMomentPath,
    TrajectoryEnsemble,
    ergodic_fixed_point,
    estimate_cost,
    path_costs,
    propagate_mean,
    propagate_moments,
    propagate_pair_moments,
    simulate,
    simulate_pair,
)
from .model import (
    MFModel,
    RiccatiTerms,
    ValidationReport,
    eval_functionals,
    validate_h1,
)
from .riccati_ergodic import (
    ErgodicSolution,
    StaticOptimum,
    bellman_residual,
    solve_are_pair,
    solve_ergodic_system,
    static_optimum,
)
from .riccati_finite import (
    FiniteHorizonSolution,
    default_steps,
    gains_at,
    integrate_riccati_system,
    value_function,
)
from .serialize import dumps_json, load_problem, write_problem
from .turnpike_lab import (
    CesaroTable,
    ExpFit,
    FitRefusal,
    GainConvergence,
    PairDeviation,
    TurnpikeReport,
    TwoSidedFit,
    cesaro_convergence,
    fit_exponential,
    gain_convergence,
    pair_deviation,
    report_from_dict,
    report_to_dict,
)

__version__ = "0.1.0"

__all__ = [
    "CesaroTable",
    "ClosedLoopSpec",
    "CostEstimate",
    "ErgodicSolution",
    "ExpFit",
    "FiniteHorizonSolution",
    "FitRefusal",
    "GainConvergence",
    "MFLQError",
    "MFModel",
    "ModelDataError",
    "MomentPath",
    "PairDeviation",
    "PairMomentPath",
    "ProblemFormatError",
    "Refusal",
    "RiccatiTerms",
    "SolverError",
    "SpectraOverlapError",
    "StabilityCertificate",
    "StaticOptimum",
    "TrajectoryEnsemble",
    "TurnpikeReport",
    "TwoSidedFit",
    "ValidationFailure",
    "ValidationReport",
    "bellman_residual",
    "certify_hurwitz",
    "certify_mean_square",
    "cesaro_convergence",
    "default_steps",
    "dumps_json",
    "ergodic_fixed_point",
    "estimate_cost",
    "eval_functionals",
    "fit_exponential",
    "gain_convergence",
    "gains_at",
    "integrate_riccati_system",
    "load_problem",
    "pair_deviation",
    "path_costs",
    "propagate_mean",
    "propagate_moments",
    "propagate_pair_moments",
    "report_from_dict",
    "report_to_dict",
    "simulate",
    "simulate_pair",
    "solve_are_pair",
    "solve_ergodic_system",
    "solve_lyapunov",
    "solve_ms_lyapunov",
    "solve_sylvester",
    "static_optimum",
    "sym_eig_min",
    "validate_h1",
    "value_function",
    "write_problem",
]
