"""Alternating row/column scaling with an l1 stopping rule.

Odd iterations rescale every row to its target, even iterations every
column.  The loop stops once ``||r(B) - r||_1 + ||c(B) - c||_1 <= eps'``
and is hard-capped at ``ceil(4 eps'^-2 log(s/l)) + 2`` iterations, a bound
that holds unconditionally for strictly positive input, so hitting it
raises :class:`~otkit.errors.InvariantError`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.special import rel_entr

from .core import as_array, as_marginal
from .errors import DegenerateInputError, InvariantError, NumericOverflowError, ParameterError
from .kernel import ScaledKernel


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    ITERATION_CAP = "iteration_cap"
    OVERFLOW = "overflow"


@dataclass(frozen=True)
class TraceRecord:
    """One step of a projection run.

    ``target`` is ``"init"``, ``"rows"``, ``"cols"``, ``"row"`` or ``"col"``;
    ``index`` names the coordinate for single-row/column updates.
    ``violation`` is the progress the step was predicted to make: the KL
    divergence of the rescaled side for a full pass, rho of the selected
    coordinate for a greedy step.
    """

    iteration: int
    dist: float
    potential: float
    target: str
    index: int = -1
    violation: float = 0.0


@dataclass
class ProjectionTrace:
    records: List[TraceRecord] = field(default_factory=list)
    terminated: Optional[Termination] = None
    iterations: int = 0

    def append(self, *args, **kwargs) -> None:
        self.records.append(TraceRecord(*args, **kwargs))

    @property
    def dists(self) -> np.ndarray:
        return np.array([rec.dist for rec in self.records])

    @property
    def potentials(self) -> np.ndarray:
        return np.array([rec.potential for rec in self.records])

    def to_csv(self) -> str:
        lines = ["iteration,dist,potential,target,index,violation"]
        for rec in self.records:
            lines.append(
                f"{rec.iteration},{rec.dist!r},{rec.potential!r},{rec.target},{rec.index},{rec.violation!r}"
            )
        return "\n".join(lines) + "\n"


def _weighted_sum(w: np.ndarray, v: np.ndarray) -> float:
    # <w, v> with 0 * (-inf) = 0.
    mask = w > 0
    return float(np.dot(w[mask], v[mask]))


def potential(K: ScaledKernel, r, c) -> float:
    """``f(x, y) = sum_ij A_ij e^{x_i + y_j} - <r, x> - <c, y>``, computed from scratch."""
    r, c = as_array(r), as_array(c)
    total = math.exp(K.log_total_mass())
    if not math.isfinite(total):
        raise NumericOverflowError("total scaled mass overflowed while evaluating the potential")
    return total - _weighted_sum(r, K.log_x) - _weighted_sum(c, K.log_y)


def dist_to_polytope(row_sums: np.ndarray, col_sums: np.ndarray, r: np.ndarray, c: np.ndarray) -> float:
    return float(np.abs(row_sums - r).sum() + np.abs(col_sums - c).sum())


def sinkhorn_iteration_cap(log_s_over_l: float, eps_prime: float) -> int:
    return math.ceil(4.0 * log_s_over_l / eps_prime**2) + 2


def _scaling_update(target: np.ndarray, log_partial: np.ndarray) -> np.ndarray:
    """New absolute log-scaling that makes each line sum to its target.

    A zero target on a zero line keeps factor 1 (0/0 read as 1).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        new = np.log(target) - log_partial
    empty = np.isneginf(log_partial)
    if np.any(empty & (target > 0)):
        raise DegenerateInputError("a line with zero mass cannot be rescaled to a positive target")
    new[empty] = 0.0
    return new


def coerce_kernel(A: Union[np.ndarray, ScaledKernel]) -> ScaledKernel:
    """Fresh normalised kernel from a positive matrix, or a copy of ``A``."""
    if isinstance(A, ScaledKernel):
        return A.copy()
    return ScaledKernel.from_matrix(A, normalize=True)


class SinkhornIterator:
    """Stateful Sinkhorn loop; :meth:`step` performs one row or column pass.

    The scaling partials of the side that was *not* just updated are kept
    so each pass costs a single matrix-vector product.
    """

    def __init__(self, K: ScaledKernel, r, c):
        self.K = K
        self.r = as_array(r)
        self.c = as_array(c)
        self.iteration = 0
        self._log_row_partial = K.log_row_partials()
        self._log_col_partial = None
        K.row_sums = K._checked(np.exp(K.log_x + self._log_row_partial))
        K.col_sums = K.compute_col_sums()

    @property
    def dist(self) -> float:
        return dist_to_polytope(self.K.row_sums, self.K.col_sums, self.r, self.c)

    @property
    def next_target(self) -> str:
        return "rows" if self.iteration % 2 == 0 else "cols"

    def step(self) -> float:
        """Advance one iteration; return the KL divergence of the side it fixed."""
        K = self.K
        self.iteration += 1
        if self.iteration % 2 == 1:
            if self._log_row_partial is None:
                self._log_row_partial = K.log_row_partials()
            gain = float(rel_entr(self.r, K.row_sums).sum())
            K.log_x = _scaling_update(self.r, self._log_row_partial)
            K.row_sums = self.r.copy()
            self._log_row_partial = None
            self._log_col_partial = K.log_col_partials()
            K.col_sums = K._checked(np.exp(K.log_y + self._log_col_partial))
        else:
            if self._log_col_partial is None:
                self._log_col_partial = K.log_col_partials()
            gain = float(rel_entr(self.c, K.col_sums).sum())
            K.log_y = _scaling_update(self.c, self._log_col_partial)
            K.col_sums = self.c.copy()
            self._log_col_partial = None
            self._log_row_partial = K.log_row_partials()
            K.row_sums = K._checked(np.exp(K.log_x + self._log_row_partial))
        return gain


def sinkhorn_project(
    A,
    r,
    c,
    eps_prime: float,
    *,
    trace: bool = False,
    max_iter: Optional[int] = None,
) -> Tuple[ScaledKernel, ProjectionTrace]:
    """Approximate Sinkhorn projection of ``A`` onto U(r, c).

    Parameters
    ----------
    A : ndarray or ScaledKernel
        Strictly positive n x n matrix.  It is normalised to unit mass
        before the first iteration.  A :class:`ScaledKernel` (for example
        one built from ``-eta * C`` in log form) is copied, not mutated.
    r, c : array_like or Marginal
        Target row and column sums.
    eps_prime : float
        l1 tolerance on the marginals.
    trace : bool
        Record dist and the exact potential after every iteration.  Each
        record costs O(n^2), so leave this off for timing.
    max_iter : int, optional
        Caller budget.  Reaching it ends the run with
        ``terminated == ITERATION_CAP`` instead of raising.

    Returns
    -------
    B : ScaledKernel
        Scalings with ``dist(B) <= eps_prime`` unless the caller budget ran out.
    trace : ProjectionTrace
    """
    if not eps_prime > 0:
        raise ParameterError(f"eps_prime must be positive, got {eps_prime!r}")
    r, c = as_marginal(r).values, as_marginal(c).values
    K = coerce_kernel(A)
    if K.n != r.size or K.n != c.size:
        raise ParameterError(f"kernel is {K.n}x{K.n} but marginals have sizes {r.size}, {c.size}")
    log_s, log_l = K.log_scale_bounds()
    cap = sinkhorn_iteration_cap(log_s - log_l, eps_prime)

    it = SinkhornIterator(K, r, c)
    out = ProjectionTrace()
    dist = it.dist
    if trace:
        out.append(0, dist, potential(K, r, c), "init")
    while dist > eps_prime:
        if max_iter is not None and it.iteration >= max_iter:
            out.terminated = Termination.ITERATION_CAP
            out.iterations = it.iteration
            return K, out
        if it.iteration >= cap:
            raise InvariantError(
                f"Sinkhorn exceeded its guaranteed iteration bound {cap} (dist={dist:.3e}, eps'={eps_prime:.3e})"
            )
        target = it.next_target
        gain = it.step()
        dist = it.dist
        if trace:
            out.append(it.iteration, dist, potential(K, r, c), target, -1, gain)
    out.terminated = Termination.CONVERGED
    out.iterations = it.iteration
    return K, out
