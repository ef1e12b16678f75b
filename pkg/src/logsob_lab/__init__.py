"""Numerical laboratory for log-Sobolev inequalities on submanifolds.

Discrete submanifolds, entropy and energy functionals with their deficits,
Hopf-Lax evolutions with hypercontractivity reports, and discrete optimal
transport certificates.
"""
from .errors import CapacityError, ConfigError, DomainError, LabError, UsageError
from .geometry import (DiscreteSubmanifold, ScalarField, geodesic_distance, gaussian,
                       integrate, make_catenoid, make_cylinder_shrinker, make_flat_chart,
                       make_sphere, read_submesh, sample, surface_gradient, write_submesh)
from .fields import FAMILIES, STANDARD_FIELDS, FieldSpec
from .functionals import (DeficitReport, alpha_grid_linkage, deficit_gaussian,
                          deficit_lp_general, deficit_lp_minimal, deficit_main,
                          deficit_parametric, dirichlet_energy, entropy, normalize)
from .hopf_lax import (HopfLaxTable, HypercontractivityReport, equality_profile,
                       euclidean_hyper_report, gaussian_hyper_report)
from .special import (constant_chain_check, digamma, general_constants, sharp_lsi_constant,
                      trigamma)
from .transport import (TransportInstance, TransportPlan, cost_convention_check,
                        cyclical_monotonicity_check, solve_exact)

__version__ = "0.1.0"
