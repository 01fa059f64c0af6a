"""Quadratic-programming backend: transcription, ADMM solver and grid oracle."""

from .oracle import SearchSpaceTooLarge, brute_force_oracle
from .solver import (INFEASIBLE, MAX_ITER, OPTIMAL, QpProblem, QpSettings, QpSolution,
                     export_triplets, import_triplets, kkt_residuals, solve)
from .transcription import (Layout, LiftedQp, RateOcpQp, SolveError, UnsupportedProblem, solve_ocp,
                            transcribe, transcribe_lifted)

__all__ = [
    "INFEASIBLE", "MAX_ITER", "OPTIMAL", "Layout", "LiftedQp", "QpProblem", "QpSettings", "QpSolution",
    "RateOcpQp", "SearchSpaceTooLarge", "SolveError", "UnsupportedProblem", "brute_force_oracle",
    "export_triplets", "import_triplets", "kkt_residuals", "solve", "solve_ocp", "transcribe",
    "transcribe_lifted",
]
