"""Second-order cone and semidefinite programming core."""
from .program import (ConicProgram, ConicSolution, PSDBlock, SolverOptions, Status, program_from_dict,
                      program_from_json, program_to_dict, program_to_json)
from .solver import dual_objective, farkas_residual, psd_outer_loop, solve

__all__ = [
    "ConicProgram", "ConicSolution", "PSDBlock", "SolverOptions", "Status", "dual_objective", "farkas_residual",
    "program_from_dict", "program_from_json", "program_to_dict", "program_to_json", "psd_outer_loop", "solve",
]
