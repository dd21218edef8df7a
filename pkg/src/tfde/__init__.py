"""Implicit Euler schemes and an all-at-once Newton-Krylov solver for
nonlinear tempered space-fractional diffusion equations."""

from __future__ import annotations

from .allatonce import (
    AllAtOnceSystem,
    GershgorinReport,
    NewtonConfig,
    Preconditioner,
    SolveReport,
    coarse_initial_guess,
    gershgorin_check,
    newton_solve,
)
from .harness import ExperimentConfig, Row, compute_err, compute_order, run_experiment
from .krylov import KrylovReport, bicgstab
from .linalg import BandedMatrix, LowerHessenbergToeplitz, ResourceLimitError, banded_lu, banded_solve
from .problems import HypothesisWarning, Mesh, ProblemSpec, build_mesh, catalog, check_hypotheses
from .schemes import SchemeSolution, SpaceOperator, liess_run, nlies_step_run
from .weights import TemperedWeights, check_lemma31, tempered_weights

__all__ = [
    "AllAtOnceSystem", "BandedMatrix", "ExperimentConfig", "GershgorinReport", "HypothesisWarning",
    "KrylovReport", "LowerHessenbergToeplitz", "Mesh", "NewtonConfig", "Preconditioner", "ProblemSpec",
    "ResourceLimitError", "Row", "SchemeSolution", "SolveReport", "SpaceOperator", "TemperedWeights",
    "banded_lu", "banded_solve", "bicgstab", "build_mesh", "catalog", "check_hypotheses", "check_lemma31",
    "coarse_initial_guess", "compute_err", "compute_order", "gershgorin_check", "liess_run", "newton_solve",
    "nlies_step_run", "run_experiment", "tempered_weights",
]
__version__ = "0.1.0"
