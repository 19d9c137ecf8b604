"""Periodic homogenization of divergence-form operators on R^d and on the Heisenberg nilmanifold."""

from .bloch import BlochBands, band_structure, fiber_operator, limit_set, spectral_refinement
from .coefficients import (CoefficientField, FundamentalCell, ellipticity, fundamental_cell, load_field, mollify,
                           save_field, scale_epsilon)
from .exceptions import EllipticityError, SolverError, ValidationError
from .forms import DiscreteForm, assemble
from .heat import HeatSemigroup, cc_distance, evolve, kernel, kernel_comparison, semigroup_convergence
from .homogenizer import (CorrectorSet, HeisenbergHomogenizer, HomogenizedMatrix, PeriodicHomogenizer,
                          heisenberg_homogenize, homogenized_matrix, richardson, solve_cell_problem)
from .lie import (StratifiedAlgebra, bch_product, coordinate_functions, dilate, homogeneous_dimension,
                  invariant_fields, magnetic_closure, make_heisenberg)
from .nilgrid import build_grid, horizontal_fields

__version__ = "0.1.0"

__all__ = [
    "BlochBands",
    "CoefficientField",
    "CorrectorSet",
    "DiscreteForm",
    "EllipticityError",
    "FundamentalCell",
    "HeatSemigroup",
    "HeisenbergHomogenizer",
    "HomogenizedMatrix",
    "PeriodicHomogenizer",
    "SolverError",
    "StratifiedAlgebra",
    "ValidationError",
    "assemble",
    "band_structure",
    "bch_product",
    "build_grid",
    "cc_distance",
    "coordinate_functions",
    "dilate",
    "ellipticity",
    "evolve",
    "fiber_operator",
    "fundamental_cell",
    "heisenberg_homogenize",
    "homogeneous_dimension",
    "homogenized_matrix",
    "horizontal_fields",
    "invariant_fields",
    "kernel",
    "kernel_comparison",
    "limit_set",
    "load_field",
    "magnetic_closure",
    "make_heisenberg",
    "mollify",
    "richardson",
    "save_field",
    "scale_epsilon",
    "semigroup_convergence",
    "solve_cell_problem",
    "spectral_refinement",
]
