from .bnb import BranchAndBound, MipSolution, Status, branch_and_bound, relative_gap
from .options import Branching, Mode, NodeSelection, SolveOptions
from .qp import QPResult, QPStatus, solve_qp_relaxation

__all__ = [
    "BranchAndBound", "Branching", "MipSolution", "Mode", "NodeSelection", "QPResult",
    "QPStatus", "SolveOptions", "Status", "branch_and_bound", "relative_gap", "solve_qp_relaxation",
]
