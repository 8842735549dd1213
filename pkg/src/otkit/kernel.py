"""Gibbs kernels and diagonally scaled matrices kept in log form.

A :class:`ScaledKernel` stands for ``D(exp(x)) A D(exp(y))``.  Only the
log of ``A`` and the two scaling vectors are stored; the scaled matrix is
never materialised inside solver loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from .core import as_array, as_cost
from .errors import DegenerateInputError, DomainError, NumericOverflowError, ParameterError

# Exponent sums beyond this go through log-sum-exp instead of exp().
OVERFLOW_GUARD = 500.0
# Below this log value exp() loses precision (subnormals start near -708).
UNDERFLOW_GUARD = -700.0


def gibbs_kernel(C, eta: float) -> np.ndarray:
    """Entrywise ``exp(-eta * C)``.

    Entries lie in ``(0, 1]`` mathematically; for ``eta * max(C)`` beyond
    roughly 745 the smallest ones underflow to zero in float64, in which case
    use :func:`log_gibbs_kernel` instead.
    """
    return np.exp(log_gibbs_kernel(C, eta))


def log_gibbs_kernel(C, eta: float) -> np.ndarray:
    if not eta > 0 or not np.isfinite(eta):
        raise ParameterError(f"eta must be a positive finite number, got {eta!r}")
    return -float(eta) * as_cost(C).entries


def normalize_total_mass(M) -> np.ndarray:
    M = as_array(M)
    total = M.sum()
    if not total > 0:
        raise DegenerateInputError("matrix has no mass to normalize")
    return M / total


def _log_of_positive(A) -> np.ndarray:
    A = as_array(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)) or np.any(A <= 0):
        raise DomainError("kernel entries must be finite and strictly positive")
    return np.log(A)


@dataclass
class ScaledKernel:
    """``D(exp(log_x)) * base * D(exp(log_y))`` with cached marginals.

    Build instances with :meth:`from_matrix` or :meth:`from_log`; the
    caches are filled on construction and by :meth:`refresh`.
    """

    log_base: np.ndarray
    log_x: np.ndarray = None
    log_y: np.ndarray = None
    row_sums: np.ndarray = field(default=None, repr=False)
    col_sums: np.ndarray = field(default=None, repr=False)
    _base: Optional[np.ndarray] = field(default=None, repr=False)
    _stab: Optional[np.ndarray] = field(default=None, repr=False)
    _ax: Optional[np.ndarray] = field(default=None, repr=False)
    _ay: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.log_base = np.asarray(self.log_base, dtype=np.float64)
        n = self.log_base.shape[0]
        if self.log_base.shape != (n, n):
            raise DomainError(f"expected a square kernel, got shape {self.log_base.shape}")
        if not np.all(np.isfinite(self.log_base)):
            raise DomainError("kernel entries must be finite and strictly positive")
        self.log_x = np.zeros(n) if self.log_x is None else np.asarray(self.log_x, dtype=np.float64).copy()
        self.log_y = np.zeros(n) if self.log_y is None else np.asarray(self.log_y, dtype=np.float64).copy()
        if self.log_base.min() > UNDERFLOW_GUARD:
            self._base = np.exp(self.log_base)
        self._stab = None
        self.refresh()

    @classmethod
    def from_matrix(cls, A, normalize: bool = True, log_x=None, log_y=None) -> "ScaledKernel":
        return cls.from_log(_log_of_positive(A), normalize=normalize, log_x=log_x, log_y=log_y)

    @classmethod
    def from_log(cls, log_A, normalize: bool = True, log_x=None, log_y=None) -> "ScaledKernel":
        log_A = as_array(log_A)
        if normalize:
            log_A = log_A - logsumexp(log_A)
        return cls(log_A, log_x, log_y)

    @property
    def n(self) -> int:
        return self.log_base.shape[0]

    @property
    def base(self) -> np.ndarray:
        return self._base if self._base is not None else np.exp(self.log_base)

    def log_scale_bounds(self) -> Tuple[float, float]:
        """``log s`` and ``log l``: total mass and smallest entry of the base."""
        return float(logsumexp(self.log_base)), float(self.log_base.min())

    def _absorb(self) -> None:
        # Fold the current scalings into a stabilised copy of the kernel so
        # later marginals only exponentiate the (small) drift since now.
        self._ax = np.where(np.isfinite(self.log_x), self.log_x, 0.0)
        self._ay = np.where(np.isfinite(self.log_y), self.log_y, 0.0)
        with np.errstate(over="ignore"):
            self._stab = np.exp(self._ax[:, None] + self.log_base + self._ay[None, :])

    def _drift(self) -> Tuple[np.ndarray, np.ndarray]:
        if self._stab is None:
            self._absorb()
        with np.errstate(invalid="ignore"):
            dx = self.log_x - self._ax
            dy = self.log_y - self._ay
        bx = np.max(np.abs(dx), where=np.isfinite(dx), initial=0.0)
        by = np.max(np.abs(dy), where=np.isfinite(dy), initial=0.0)
        if bx + by > OVERFLOW_GUARD:
            self._absorb()
            with np.errstate(invalid="ignore"):
                dx = self.log_x - self._ax
                dy = self.log_y - self._ay
        return dx, dy

    def log_row_partials(self) -> np.ndarray:
        """``log sum_j A_ij exp(y_j)``: row sums before the row scaling."""
        _, dy = self._drift()
        p = self._stab @ np.exp(dy)
        with np.errstate(divide="ignore"):
            out = np.log(p) - self._ax
        thin = ~(p > 1e-280)
        if np.any(thin):
            out[thin] = logsumexp(self.log_base[thin] + self.log_y[None, :], axis=1)
        return out

    def log_col_partials(self) -> np.ndarray:
        """``log sum_i exp(x_i) A_ij``: column sums before the column scaling."""
        dx, _ = self._drift()
        p = np.exp(dx) @ self._stab
        with np.errstate(divide="ignore"):
            out = np.log(p) - self._ay
        thin = ~(p > 1e-280)
        if np.any(thin):
            out[thin] = logsumexp(self.log_base[:, thin] + self.log_x[:, None], axis=0)
        return out

    def compute_row_sums(self) -> np.ndarray:
        return self._checked(np.exp(self.log_x + self.log_row_partials()))

    def compute_col_sums(self) -> np.ndarray:
        return self._checked(np.exp(self.log_y + self.log_col_partials()))

    @staticmethod
    def _checked(sums: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(sums)):
            raise NumericOverflowError(
                "scaled marginals overflowed float64; use a larger eps (smaller eta) "
                "or recompute from a stabilised starting point"
            )
        return sums

    def refresh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Recompute both cached marginals from scratch (O(n^2))."""
        self.row_sums = self.compute_row_sums()
        self.col_sums = self.compute_col_sums()
        return self.row_sums, self.col_sums

    def log_total_mass(self) -> float:
        return float(logsumexp(self.log_x[:, None] + self.log_base + self.log_y[None, :]))

    def row_entries(self, i: int) -> np.ndarray:
        return np.exp(self.log_x[i] + self.log_base[i] + self.log_y)

    def col_entries(self, j: int) -> np.ndarray:
        return np.exp(self.log_x + self.log_base[:, j] + self.log_y[j])

    def copy(self) -> "ScaledKernel":
        return ScaledKernel(self.log_base, self.log_x, self.log_y)


def realize(K: ScaledKernel) -> np.ndarray:
    """Materialise ``D(exp(x)) A D(exp(y))`` as a dense matrix."""
    E = K.log_x[:, None] + K.log_y[None, :]
    with np.errstate(invalid="ignore", over="ignore"):
        if K._base is None:
            return np.exp(E + K.log_base)
        out = np.exp(E) * K._base
    wild = ~(np.abs(E) <= OVERFLOW_GUARD)
    if np.any(wild):
        out[wild] = np.exp(E[wild] + K.log_base[wild])
    return out


def refresh_marginals(K: ScaledKernel) -> Tuple[np.ndarray, np.ndarray]:
    return K.refresh()
