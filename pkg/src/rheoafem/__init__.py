"""Adaptive mixed finite elements for steady incompressible flows whose
constitutive law is a maximal monotone r-graph: regularized Galerkin
solves, residual-based a posteriori indicators, a graph-approximation
indicator, and an adaptive loop that competes mesh refinement against
refinement of the constitutive approximation."""

__version__ = "0.1.0"

from .afem import AfemConfig, AfemTrace, afem_run, afem_step, mark
from .constitutive import (Exponents, GraphModel, RegularizedLaw,
                           graph_distance, graph_distance_bound_simple_tau,
                           graph_indicator_EA, make_exponents, make_graph,
                           make_regularized, selection)
from .estimator import IndicatorField, assemble_indicators
from .fespace import (FunctionSpacePair, PressureField, VelocityField,
                      build_space, inf_sup_constant, project_pressure,
                      project_stress)
from .forcing import ForcingField, make_forcing
from .mesh import Mesh, l_shape, read_mesh, refine, uniform_refine, unit_square, validate, write_mesh
from .solver import (DiscreteState, SolverError, SolverOptions, linear_solve,
                     solve_discrete, strong_convection, trilinear_form)

__all__ = [name for name in dir() if not name.startswith("_")]
