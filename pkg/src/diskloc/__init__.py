"""Distributed range-based network localization via the disk relaxation.

Sensors at unknown positions measure ranges to network neighbors and to a
few anchors at known positions.  Maximum-likelihood localization minimizes a
nonconvex sum of squared range violations; relaxing each sphere constraint
to the disk it bounds yields a convex surrogate whose minimizers come with
computable optimality-gap certificates.  This package provides the relaxed
cost, three distributed solvers for it, the certificates, and a seeded Monte
Carlo experiment harness with communication accounting.
"""

from .cost import (
    CostReport,
    GapCertificate,
    eval_f,
    eval_fhat,
    gap_certificate,
    grad_fhat,
    grad_fhat_node,
)
from .geometry import Ball, grad_phi_ball, phi_ball, phi_sphere, project_ball
from .network import (
    GenerationError,
    Problem,
    ValidationError,
    generate_geometric,
    lipschitz_fhat,
)
from .simulate import ExperimentConfig, ExperimentResult, gen_measurements, rmse, run_experiment
from .solvers import (
    ActivationSequence,
    AsyncExactLocalizer,
    AsyncInexactLocalizer,
    ParallelLocalizer,
    SolverTrace,
    nesterov_weight,
    solve_single_source,
)

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "project_ball",
    "phi_ball",
    "phi_sphere",
    "grad_phi_ball",
    "Problem",
    "ValidationError",
    "GenerationError",
    "generate_geometric",
    "lipschitz_fhat",
    "CostReport",
    "GapCertificate",
    "eval_f",
    "eval_fhat",
    "grad_fhat",
    "grad_fhat_node",
    "gap_certificate",
    "ParallelLocalizer",
    "AsyncExactLocalizer",
    "AsyncInexactLocalizer",
    "ActivationSequence",
    "SolverTrace",
    "nesterov_weight",
    "solve_single_source",
    "ExperimentConfig",
    "ExperimentResult",
    "gen_measurements",
    "rmse",
    "run_experiment",
    "__version__",
]
