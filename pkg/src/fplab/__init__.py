"""Numerical laboratory for a nonlocal fractional p-Laplacian Dirichlet
problem with an oscillating reaction term.

The package evaluates every closed-form constant of the variational setup,
verifies the cone test-function seminorm bound by independent Monte Carlo
and quadrature, constructs oscillating bump nonlinearities, discretizes
the energy functional on one-dimensional grids, and searches for the
predicted sequences of distinct solutions at desk scale.
"""

from .constants import (ConstantSet, DomainSpec, LambdaInterval,
                        ProblemParams, WeightSpec,
                        estimate_embedding_constant, geometric_constant,
                        kappa, lambda_interval, unit_ball_volume)
from .cone import (ConeFunction, SeminormBreakdown, seminorm_bound_terms,
                   seminorm_direct_mc, seminorm_estimate,
                   seminorm_reference_interval, unboundedness_probe)
from .discretization import (EnergyModel, EnergyReport, Grid,
                             discrete_gagliardo, energy, gradient,
                             weak_residual)
from .nonlinearity import (BumpNonlinearity, OscillationDiagnostics,
                           factorial_bumps, geometric_origin_bumps,
                           origin_bumps, oscillation_diagnostics,
                           positive_part)
from .solver import (MultistartResult, PhiEstimate, SolutionRecord,
                     SolveConfig, estimate_phi, increasing_energy_staircase,
                     minimize_local, multistart_sequence, nested_ball_search,
                     negative_part_tolerance_ok, scalar_truncation_inequality,
                     verify_nonnegativity)

__version__ = "0.1.0"
