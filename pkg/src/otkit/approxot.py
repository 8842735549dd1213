"""End-to-end additive approximation of the optimal transport cost.

With ``eta = 4 log n / eps`` and ``eps' = eps / (8 ||C||_inf)`` the pipeline
``A = exp(-eta C)`` -> approximate projection -> rounding returns a feasible
plan whose cost exceeds the optimum by at most ``eps``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import TransportPlan, as_array, as_cost, as_marginal, marginal_violation, product_plan
from .errors import DimensionError, InvariantError, ParameterError
from .greenkhorn import greenkhorn_project
from .kernel import ScaledKernel, log_gibbs_kernel, realize
from .rounding import round_to_polytope
from .sinkhorn import ProjectionTrace, sinkhorn_project

PROJECTORS = {"sinkhorn": sinkhorn_project, "greenkhorn": greenkhorn_project}


@dataclass
class SolveReport:
    plan: TransportPlan
    objective: float
    eta: float
    eps_prime: float
    projector: str
    iterations: int
    wall_time: float
    violation: float = 0.0
    rounding_shift: float = 0.0
    trace: Optional[ProjectionTrace] = None


def schedule(n: int, eps: float, cost_max: float):
    """Return ``(eta, eps_prime)`` for an n x n problem at additive accuracy ``eps``."""
    return 4.0 * math.log(n) / eps, eps / (8.0 * cost_max)


def transport_objective(P, C) -> float:
    P, C = as_array(P), as_array(C)
    if P.shape != C.shape:
        raise DimensionError(f"plan shape {P.shape} does not match cost shape {C.shape}")
    return float(np.sum(P * C))


def approx_ot(
    C,
    r,
    c,
    eps: float,
    projector: str = "sinkhorn",
    *,
    eta: Optional[float] = None,
    trace: bool = False,
    **projector_kwargs,
) -> SolveReport:
    """Feasible plan within ``eps`` of the optimal transport cost.

    Parameters
    ----------
    C : array_like or CostMatrix
        Nonnegative n x n costs; ``eps`` is in the same units.
    r, c : array_like or Marginal
    eps : float
    projector : {"sinkhorn", "greenkhorn"}
    eta : float, optional
        Override the regularisation strength.  The accuracy guarantee only
        holds for the default ``4 log n / eps``.
    trace : bool
        Keep the projector's per-iteration trace.
    """
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps!r}")
    if projector not in PROJECTORS:
        raise ParameterError(f"unknown projector {projector!r}; choose from {sorted(PROJECTORS)}")
    C = as_cost(C)
    r, c = as_marginal(r), as_marginal(c)
    n = C.n
    if r.n != n or c.n != n:
        raise DimensionError(f"cost is {n}x{n} but marginals have sizes {r.n}, {c.n}")
    start = time.perf_counter()

    if n == 1 or C.max_abs == 0.0:
        plan = TransportPlan(product_plan(r, c), feasible_for=(r, c))
        return SolveReport(
            plan=plan,
            objective=transport_objective(plan.entries, C.entries),
            eta=math.inf if n == 1 else 4.0 * math.log(n) / eps,
            eps_prime=math.inf if C.max_abs == 0.0 else eps / (8.0 * C.max_abs),
            projector=projector,
            iterations=0,
            wall_time=time.perf_counter() - start,
        )

    eta_default, eps_prime = schedule(n, eps, C.max_abs)
    eta = eta_default if eta is None else float(eta)
    K = ScaledKernel.from_log(log_gibbs_kernel(C, eta), normalize=True)
    B, proj_trace = PROJECTORS[projector](K, r, c, eps_prime, trace=trace, **projector_kwargs)

    F = realize(B)
    violation = marginal_violation(F, r, c)
    if violation > eps_prime * (1 + 1e-9):
        raise InvariantError(f"projector returned violation {violation:.3e} above eps'={eps_prime:.3e}")
    plan = round_to_polytope(F, r, c)
    shift = float(np.abs(plan.entries - F).sum())
    if shift > 2.0 * violation + 1e-9:
        raise InvariantError(f"rounding moved {shift:.3e} mass, more than twice the violation {violation:.3e}")

    return SolveReport(
        plan=plan,
        objective=transport_objective(plan.entries, C.entries),
        eta=eta,
        eps_prime=eps_prime,
        projector=projector,
        iterations=proj_trace.iterations,
        wall_time=time.perf_counter() - start,
        violation=violation,
        rounding_shift=shift,
        trace=proj_trace if trace else None,
    )
