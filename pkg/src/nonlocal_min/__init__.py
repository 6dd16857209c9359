"""Numerical minimization of weakly repulsive non-local interaction energies.

Library layout follows the problem structure: kernels and their hypothesis
checkers, simplex geometry and shape diagnostics, the three representation
classes (atoms / grid densities / radial profiles), energies with
Euler-Lagrange residuals and the a-priori diameter bound, and the
optimizers plus the batch CLI with its acceptance suite.
"""

from .errors import (ConfigError, HypothesisError, InfeasibleMassError,
                     RegularityError, SearchHorizonError, SingularPointError,
                     ZeroMassError)
from .kernels import (ConfinementHypotheses, PowerLawMinusKernel, RadialKernel,
                      TabulatedKernel, check_confinement_hypotheses,
                      check_definitively_nondecreasing,
                      check_derivative_consistency,
                      check_second_derivative_ratio, check_weak_repulsivity,
                      kernel_eval, make_confinement_bump)
from .geometry import (ClusterReport, Simplex, align_point_sets,
                       align_to_simplex, build_simplex, cluster_support,
                       hausdorff_distance, k_constant, k_constant_numeric)
from .measures import (DiscreteMeasure, GridDensity, RadialProfile,
                       measure_to_density, normalize_to_probability,
                       project_box_mass, project_box_mass_weighted,
                       radial_to_grid, unit_ball_volume)
from .energy import (DiameterBoundReport, ELReport, GridKernelTable,
                     diameter_bound, el_residual_density, el_residual_measure,
                     el_residual_radial, energy_cross_density,
                     energy_cross_discrete, energy_density, energy_discrete,
                     energy_radial, hessian_positive_direction, kappa_constant,
                     potential_at, potential_grad, potential_hessian,
                     radial_kernel_matrix, radial_reduced_kernel)
from .optimize import (Classification, OptimizeOptions, OptimizeTrace,
                       classify_minimizer, density_components,
                       intermediate_fraction, mass_sweep, minimize_density,
                       minimize_measure, minimize_radial,
                       perturbed_simplex_positions, support_epsilon,
                       uniform_ball_positions)

__version__ = "0.1.0"
