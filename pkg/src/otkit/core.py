"""Numeric value types, marginals and divergences.

Every array is float64.  The conventions ``0 log 0 = 0`` and
``0 log(1/0) = 0`` hold throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import entr, rel_entr

from .errors import DimensionError, DivergenceUndefinedError, DomainError, FormatError

SIMPLEX_TOL = 1e-8
FEASIBILITY_TOL = 1e-10
NORMALIZE_SLACK = 1e-6

ArrayLike = Union[np.ndarray, "Marginal", "CostMatrix", "TransportPlan", list, tuple]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Marginal:
    """Probability vector used as a row or column target.

    Parameters
    ----------
    values : array_like, shape (n,)
        Nonnegative masses.
    normalize : bool
        Rescale to unit sum when the sum is within ``NORMALIZE_SLACK`` of 1.
    tol : float
        Absolute tolerance on the unit-sum check.
    """

    values: np.ndarray
    normalize: bool = False
    tol: float = SIMPLEX_TOL

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise DimensionError(f"marginal must be a nonempty vector, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("marginal entries must be finite")
        if np.any(v < 0):
            raise DomainError("marginal entries must be nonnegative")
        total = v.sum()
        if self.normalize:
            if abs(total - 1.0) > NORMALIZE_SLACK:
                raise DomainError(f"marginal sums to {total!r}, too far from 1 to normalize")
            v = v / total
        elif abs(total - 1.0) > self.tol:
            raise DomainError(f"marginal sums to {total!r}, expected 1 within {self.tol}")
        object.__setattr__(self, "values", _frozen(v))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    @property
    def n(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """Square nonnegative cost matrix with its max entry cached."""

    entries: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.entries, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] != C.shape[1] or C.size == 0:
            raise DimensionError(f"cost matrix must be square and nonempty, got shape {C.shape}")
        if not np.all(np.isfinite(C)):
            raise DomainError("cost entries must be finite")
        if np.any(C < 0):
            raise DomainError("cost entries must be nonnegative")
        object.__setattr__(self, "entries", _frozen(C))

    @property
    def max_abs(self) -> float:
        return float(self.entries.max())

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Nonnegative n x n coupling.

    When ``feasible_for`` is given, the constructor certifies that the row
    and column sums match the pair ``(r, c)`` coordinatewise within ``tol``.
    """

    entries: np.ndarray
    feasible_for: Optional[Tuple[Marginal, Marginal]] = None
    tol: float = FEASIBILITY_TOL

    def __post_init__(self):
        P = np.asarray(self.entries, dtype=np.float64)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise DimensionError(f"plan must be square, got shape {P.shape}")
        if np.any(P < 0) or not np.all(np.isfinite(P)):
            raise DomainError("plan entries must be finite and nonnegative")
        object.__setattr__(self, "entries", _frozen(P))
        if self.feasible_for is not None:
            r, c = (np.asarray(v, dtype=np.float64) for v in self.feasible_for)
            row_err, col_err = self.marginal_errors(r, c)
            if max(row_err, col_err) > self.tol:
                raise DomainError(
                    f"plan is not in U(r, c): max row error {row_err:.3e}, "
                    f"max column error {col_err:.3e}, tolerance {self.tol:.1e}"
                )

    def marginal_errors(self, r, c) -> Tuple[float, float]:
        """Largest per-coordinate row and column residuals."""
        r, c = np.asarray(r), np.asarray(c)
        if r.shape != (self.n,) or c.shape != (self.n,):
            raise DimensionError("marginals do not match plan size")
        return (
            float(np.max(np.abs(self.entries.sum(axis=1) - r))),
            float(np.max(np.abs(self.entries.sum(axis=0) - c))),
        )

    @property
    def certified(self) -> bool:
        return self.feasible_for is not None

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def as_array(a: ArrayLike) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def as_marginal(v, normalize: bool = False) -> Marginal:
    return v if isinstance(v, Marginal) else Marginal(np.asarray(v, dtype=np.float64), normalize=normalize)


def as_cost(C) -> CostMatrix:
    return C if isinstance(C, CostMatrix) else CostMatrix(np.asarray(C, dtype=np.float64))


def row_sums(M: ArrayLike) -> np.ndarray:
    """Row sums ``M 1``."""
    return as_array(M).sum(axis=1)


def col_sums(M: ArrayLike) -> np.ndarray:
    """Column sums ``M^T 1``."""
    return as_array(M).sum(axis=0)


def l1_distance(u: ArrayLike, v: ArrayLike) -> float:
    u, v = as_array(u), as_array(v)
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch: {u.shape} vs {v.shape}")
    return float(np.abs(u - v).sum())


def kl_divergence(p: ArrayLike, q: ArrayLike) -> float:
    """Kullback-Leibler divergence ``sum_i p_i log(p_i / q_i)``.

    Raises
    ------
    DivergenceUndefinedError
        If some ``q_i = 0`` while ``p_i > 0``.
    """
    p, q = as_array(p), as_array(q)
    if p.shape != q.shape:
        raise DimensionError(f"length mismatch: {p.shape} vs {q.shape}")
    if np.any(p < 0) or np.any(q < 0):
        raise DomainError("KL divergence needs nonnegative arguments")
    if np.any((q == 0) & (p > 0)):
        raise DivergenceUndefinedError("p is not absolutely continuous with respect to q")
    return float(rel_entr(p, q).sum())


def entropy(M: ArrayLike) -> float:
    """Entrywise entropy ``sum p log(1/p)`` of a vector or matrix."""
    M = as_array(M)
    if np.any(M < 0):
        raise DomainError("entropy is defined for nonnegative entries only")
    return float(entr(M).sum())


def rho(a, b):
    """Greedy progress measure ``b - a + a log(a/b)``.

    Works elementwise on arrays.  ``rho(0, b) = b`` and ``rho(a, 0) = inf``
    for ``a > 0``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = b - a + rel_entr(a, b)
    return float(out) if out.ndim == 0 else out


def marginal_violation(M: ArrayLike, r: ArrayLike, c: ArrayLike) -> float:
    """``||r(M) - r||_1 + ||c(M) - c||_1``; zero exactly on U(r, c)."""
    M = as_array(M)
    r, c = as_array(r), as_array(c)
    if M.ndim != 2 or M.shape != (r.size, c.size):
        raise DimensionError(f"matrix shape {M.shape} does not match marginals ({r.size}, {c.size})")
    return l1_distance(row_sums(M), r) + l1_distance(col_sums(M), c)


def product_plan(r: ArrayLike, c: ArrayLike) -> np.ndarray:
    return np.outer(as_array(r), as_array(c))


# Text format: one row per line, decimal literals separated by single spaces.


def read_matrix(path: Union[str, Path]) -> np.ndarray:
    """Read a dense matrix (or a single-line vector) in the plain text format."""
    text = Path(path).read_text(encoding="utf-8")
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise FormatError(f"{path}: empty matrix file")
    width = {len(row) for row in rows}
    if len(width) != 1:
        raise FormatError(f"{path}: ragged rows with widths {sorted(width)}")
    return np.array(rows, dtype=np.float64)


def read_vector(path: Union[str, Path]) -> np.ndarray:
    """Read a vector written either as one line or as one entry per line."""
    M = read_matrix(path)
    if M.shape[0] != 1 and M.shape[1] != 1:
        raise FormatError(f"{path}: expected a vector, got a {M.shape[0]}x{M.shape[1]} matrix")
    return M.ravel()


def format_matrix(M: ArrayLike) -> str:
    M = np.atleast_2d(as_array(M))
    return "".join(" ".join(repr(float(x)) for x in row) + "\n" for row in M)


def write_matrix(path: Union[str, Path], M: ArrayLike) -> None:
    Path(path).write_text(format_matrix(M), encoding="utf-8")
