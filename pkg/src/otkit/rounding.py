"""Rounding a nonnegative matrix onto the transport polytope U(r, c).

Rows with too much mass are scaled down, then columns, and the missing
mass is put back as a rank-one product of the two deficit vectors.  The
output is exactly feasible and its l1 distance to the input is at most
twice the input's marginal violation.
"""

from __future__ import annotations

import numpy as np

from .core import TransportPlan, as_array, as_marginal
from .errors import DimensionError, DomainError, InvariantError, ParameterError

MASS_RANGE = (0.5, 2.0)


def _shrink_factors(target: np.ndarray, sums: np.ndarray) -> np.ndarray:
    # min(target / sums, 1); a line with no mass keeps factor 1.
    out = np.ones_like(sums)
    over = sums > target
    out[over] = target[over] / sums[over]
    return out


def _round(F: np.ndarray, r: np.ndarray, c: np.ndarray, rows_first: bool):
    if rows_first:
        F1 = _shrink_factors(r, F.sum(axis=1))[:, None] * F
        F2 = F1 * _shrink_factors(c, F1.sum(axis=0))[None, :]
    else:
        F1 = F * _shrink_factors(c, F.sum(axis=0))[None, :]
        F2 = _shrink_factors(r, F1.sum(axis=1))[:, None] * F1
    err_r = np.maximum(r - F2.sum(axis=1), 0.0)
    err_c = np.maximum(c - F2.sum(axis=0), 0.0)
    mass_r, mass_c = err_r.sum(), err_c.sum()
    if abs(mass_r - mass_c) > 1e-9:
        raise InvariantError(f"row and column deficits disagree: {mass_r!r} vs {mass_c!r}")
    if mass_r == 0.0:
        return F2, F2
    return F2 + np.outer(err_r, err_c) / mass_r, F2


def _check_inputs(F, r, c):
    F = as_array(F)
    r, c = as_marginal(r), as_marginal(c)
    if F.ndim != 2 or F.shape != (r.n, c.n):
        raise DimensionError(f"matrix shape {F.shape} does not match marginals ({r.n}, {c.n})")
    if not np.all(np.isfinite(F)) or np.any(F < 0):
        raise DomainError("rounding needs a finite nonnegative matrix")
    total = F.sum()
    if not MASS_RANGE[0] <= total <= MASS_RANGE[1]:
        raise DomainError(f"total mass {total!r} is outside {MASS_RANGE}; normalise the input first")
    return F, r, c


def removed_mass(F, r, c, rows_first: bool = True) -> float:
    """Mass taken out by the two shrinking steps, ``||F||_1 - ||F''||_1``."""
    F, r, c = _check_inputs(F, r, c)
    _, F2 = _round(F, r.values, c.values, rows_first)
    return float(F.sum() - F2.sum())


def round_to_polytope(F, r, c) -> TransportPlan:
    """Feasible plan ``G`` with ``||G - F||_1 <= 2 (||r(F) - r||_1 + ||c(F) - c||_1)``."""
    F, r, c = _check_inputs(F, r, c)
    G, _ = _round(F, r.values, c.values, rows_first=True)
    return TransportPlan(G, feasible_for=(r, c))


def round_randomized(F, r, c, coin: int) -> TransportPlan:
    """Either branch of the randomised rounding, chosen by the caller's ``coin``.

    ``coin == 0`` is :func:`round_to_polytope`; ``coin == 1`` shrinks
    columns before rows.  Drawing the coin uniformly gives an expected
    perturbation of at most 1.5 times the marginal violation.
    """
    if coin not in (0, 1):
        raise ParameterError(f"coin must be 0 or 1, got {coin!r}")
    F, r, c = _check_inputs(F, r, c)
    G, _ = _round(F, r.values, c.values, rows_first=(coin == 0))
    return TransportPlan(G, feasible_for=(r, c))
