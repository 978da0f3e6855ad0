"""Structure-preserving LDG solver for two-state conversion systems."""

__version__ = "0.1.0"

from .dgspace import DGField, DGSpace, QuadratureRule
from .ldg_ops import DiffusionTensor, LDGMatrices, assemble_A_LDG, assemble_core
from .mesh import Rectangle, SimplicialMesh, TimeGrid, build_structured_mesh
from .model import InitialData, ProblemCoefficients
from .solver import BackwardEulerSolver, SolverConfig, StepState

__all__ = [
    "__version__",
    "DGField",
    "DGSpace",
    "QuadratureRule",
    "DiffusionTensor",
    "LDGMatrices",
    "assemble_A_LDG",
    "assemble_core",
    "Rectangle",
    "SimplicialMesh",
    "TimeGrid",
    "build_structured_mesh",
    "InitialData",
    "ProblemCoefficients",
    "BackwardEulerSolver",
    "SolverConfig",
    "StepState",
]
