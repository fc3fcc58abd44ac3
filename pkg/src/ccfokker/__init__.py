"""Chang-Cooper backward-Euler Fokker-Planck solver with block-system analysis
and a classical emulation of the quantum linear-systems pipeline."""

from .analysis import AnalysisReport, analyze
from .assembly import StepMatrix, assemble_step_matrix
from .catalog import make_problem
from .global_system import GlobalSystem, build_global, hermitian_dilation, solve_global
from .grid import Grid
from .model import FPEProblem, Gaussian, GridVector, PointMass
from .qlscca import choose_discretization, emulate, fidelity_check
from .stepper import Trajectory, evolve, step

__version__ = "0.1.0"

__all__ = [
    "AnalysisReport",
    "FPEProblem",
    "Gaussian",
    "GlobalSystem",
    "Grid",
    "GridVector",
    "PointMass",
    "StepMatrix",
    "Trajectory",
    "analyze",
    "assemble_step_matrix",
    "build_global",
    "choose_discretization",
    "emulate",
    "evolve",
    "fidelity_check",
    "hermitian_dilation",
    "make_problem",
    "solve_global",
    "step",
]
