"""Parareal with splitting time integrators for 2D reaction-diffusion.

Layers, bottom-up: :mod:`~parasplit.grid` (mesh, 9-point operator,
manufactured problems), :mod:`~parasplit.splitting` (dimensional and
domain-decomposition splittings), :mod:`~parasplit.integrators` (FIE, DR
and IE steps on top of batched block solvers), :mod:`~parasplit.parareal`
(the iteration), :mod:`~parasplit.analysis` (convergence factors and their
certification) and :mod:`~parasplit.experiments` (studies and CLI).
"""

from .analysis import certify_bound, conv_factor, k_value
from .backend import active_backend, set_backend
from .errors import (ConfigError, DivergenceError, EllipticityError, ParasplitError,
                     SingularPivotError, SplittingNotApplicableError, UnsupportedMeshError)
from .grid import (DiffusionTensor, Mesh2D, assemble, continuous_problem, error_norm,
                   manufactured_problem, semidiscretize)
from .integrators import make_propagator
from .parareal import StoppingRule, TimeGrid, fine_trajectory, parareal_solve
from .splitting import (DIMENSIONAL, DOMAIN_DECOMPOSITION, build_dimensional,
                        build_domain_decomposition, build_partition_of_unity, build_split)

__version__ = "0.1.0"

__all__ = [
    "DIMENSIONAL", "DOMAIN_DECOMPOSITION", "ConfigError", "DiffusionTensor", "DivergenceError",
    "EllipticityError", "Mesh2D", "ParasplitError", "SingularPivotError",
    "SplittingNotApplicableError", "StoppingRule", "TimeGrid", "UnsupportedMeshError",
    "active_backend", "assemble", "build_dimensional", "build_domain_decomposition",
    "build_partition_of_unity", "build_split", "certify_bound", "continuous_problem",
    "conv_factor", "error_norm", "fine_trajectory", "k_value", "make_propagator",
    "manufactured_problem", "parareal_solve", "semidiscretize", "set_backend",
]
