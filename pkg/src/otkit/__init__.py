"""Additive-error optimal transport by entropic matrix scaling."""

from .approxot import SolveReport, approx_ot, schedule, transport_objective
from .core import (
    CostMatrix,
    Marginal,
    TransportPlan,
    col_sums,
    entropy,
    kl_divergence,
    l1_distance,
    marginal_violation,
    rho,
    row_sums,
)
from .errors import (
    CapabilityError,
    DegenerateInputError,
    DimensionError,
    DivergenceUndefinedError,
    DomainError,
    FormatError,
    InvariantError,
    NumericOverflowError,
    OTError,
    ParameterError,
)
from .greenkhorn import greedy_select, greenkhorn_project
from .kernel import ScaledKernel, gibbs_kernel, normalize_total_mass, realize, refresh_marginals
from .oracle import ExactSolution, exact_ot
from .rounding import round_randomized, round_to_polytope
from .sinkhorn import ProjectionTrace, Termination, potential, sinkhorn_project

__version__ = "0.1.0"
