"""Matrix-oriented finite elements on profile-bounded domains.

Discretizes elliptic and parabolic PDEs (including two-species
reaction-diffusion systems) as Sylvester matrix equations built from 1D
factor matrices, and solves them by spectral reduction, matrix-oriented
preconditioned conjugate gradients, or a sparse Kronecker reference path.
"""

__version__ = "0.1.0"

from .exceptions import (AssemblyError, ConfigError, GeometryError,
                         OperatorError, SolverError, SylfemError)
from .geometry import (CAP, CAP_DOMAIN, JAR, JAR_DOMAIN, SQUARE, UNIT,
                       DomainKind, DomainSpec, ProfileFn, domain_from_name,
                       hhat, map_to_physical, map_to_reference,
                       register_domain, wrap_to_cylinder)
from .fem1d import (Basis1D, BCKind, DirectionSet, LumpedSet, Matrix1DSet,
                    assemble_lumped, assemble_standard, assemble_weighted,
                    build_basis, build_direction_sets, dof_count)
from .operators import (GridFunction, SylvesterOperator, apply,
                        elliptic_operator, expand_with_boundary,
                        full_node_grid, interior_values, mass_operator,
                        parabolic_operator, physical_grid, to_kronecker,
                        unvec, vec)
from .solvers import (Preconditioner, SolveReport, SpectralCache,
                      StoppingRule, build_spectral_cache,
                      dirichlet_p1_eigenvalues, dirichlet_sine_basis,
                      increment_threshold, make_preconditioner, mo_pcg,
                      reference_increment, relative_residual, solve_direct,
                      solve_reduced, solve_reduced_closed_form,
                      timestep_residual, vector_pcg)
from .models import (EQUILIBRIUM, DIBParams, InitialData,
                     ManufacturedProblem, dib_kinetics, dib_presets,
                     effective_domain_size, initial_fields,
                     manufactured_problem)
from .timestepping import (BlowUpError, InnerSolver, TimeGrid, Trajectory,
                           imex_euler_heat, imex_euler_rds, vector_imex_heat,
                           vector_imex_rds)
from .norms import exact_nodal, l2_error, observed_orders

__all__ = [name for name in dir() if not name.startswith("_")]
