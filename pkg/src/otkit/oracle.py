"""Exact optimal transport by the transportation simplex method.

Used to verify the entropic pipeline at desk scale.  The basis is kept as
an explicit spanning tree of 2n - 1 cells, so degenerate (zero-valued)
basic cells need no special casing.  Entering cells are chosen by the most
negative reduced cost; after a run of degenerate pivots the method
switches to Bland's lowest-index rule, which cannot cycle.
"""

from __future__ import annotations

from collections import deque
from typing import NamedTuple, Tuple

import numpy as np

from .core import TransportPlan, as_cost, as_marginal
from .errors import CapabilityError, DimensionError, DomainError, InvariantError

MAX_SIZE = 256
DEGENERATE_STREAK = 50


class ExactSolution(NamedTuple):
    plan: TransportPlan
    value: float
    duals: Tuple[np.ndarray, np.ndarray]


def _northwest_corner(r: np.ndarray, c: np.ndarray):
    n = r.size
    supply, demand = r.copy(), c.copy()
    X = np.zeros((n, n))
    basis = []
    i = j = 0
    while True:
        q = min(supply[i], demand[j])
        X[i, j] = q
        basis.append((i, j))
        supply[i] -= q
        demand[j] -= q
        if i == n - 1 and j == n - 1:
            break
        if j == n - 1 or (i < n - 1 and supply[i] <= demand[j]):
            i += 1
        else:
            j += 1
    return X, basis


def _adjacency(basis, n):
    # Tree nodes: rows are 0..n-1, columns are n..2n-1.
    adj = [[] for _ in range(2 * n)]
    for i, j in basis:
        adj[i].append(n + j)
        adj[n + j].append(i)
    return adj


def _potentials(C: np.ndarray, adj, n):
    u = np.full(n, np.nan)
    v = np.full(n, np.nan)
    u[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if node < n:
                j = nb - n
                if np.isnan(v[j]):
                    v[j] = C[node, j] - u[node]
                    queue.append(nb)
            else:
                i = nb
                if np.isnan(u[i]):
                    u[i] = C[i, node - n] - v[node - n]
                    queue.append(nb)
    if np.isnan(u).any() or np.isnan(v).any():
        raise InvariantError("basis is not a spanning tree")
    return u, v


def _tree_path(adj, start: int, goal: int):
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    return path[::-1]


def exact_ot(C, r, c, *, tol: float = 1e-12, max_pivots: int = 1_000_000) -> ExactSolution:
    """Minimise ``<P, C>`` over U(r, c) exactly.

    Returns
    -------
    ExactSolution
        ``(plan, value, (u, v))`` where the dual potentials satisfy
        ``u_i + v_j <= C_ij`` and ``<r, u> + <c, v> = value`` up to rounding.

    Raises
    ------
    CapabilityError
        For n above 256.
    DomainError
        When the marginals carry different total mass.
    """
    C = as_cost(C).entries
    r_m, c_m = as_marginal(r), as_marginal(c)
    r, c = r_m.values, c_m.values
    n = C.shape[0]
    if r.size != n or c.size != n:
        raise DimensionError(f"cost is {n}x{n} but marginals have sizes {r.size}, {c.size}")
    if n > MAX_SIZE:
        raise CapabilityError(f"exact oracle supports n <= {MAX_SIZE}, got {n}")
    if abs(r.sum() - c.sum()) > 1e-9:
        raise DomainError("marginals must carry equal total mass")

    X, basis = _northwest_corner(r, c)
    scale = max(1.0, float(C.max()))
    streak = 0
    for _ in range(max_pivots):
        adj = _adjacency(basis, n)
        u, v = _potentials(C, adj, n)
        reduced = C - u[:, None] - v[None, :]
        if streak >= DEGENERATE_STREAK:
            negative = np.flatnonzero(reduced.ravel() < -tol * scale)
            if negative.size == 0:
                break
            i0, j0 = divmod(int(negative[0]), n)
        else:
            flat = int(np.argmin(reduced))
            i0, j0 = divmod(flat, n)
            if reduced[i0, j0] >= -tol * scale:
                break
        # cycle: entering cell, then the tree path from column j0 back to row i0
        path = _tree_path(adj, n + j0, i0)
        cells = []
        for a, b in zip(path[:-1], path[1:]):
            cells.append((b, a - n) if a >= n else (a, b - n))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(X[cell] for cell in minus)
        leaving = min((cell for cell in minus if X[cell] == theta), key=lambda ij: ij[0] * n + ij[1])
        for cell in minus:
            X[cell] -= theta
        for cell in plus:
            X[cell] += theta
        X[i0, j0] += theta
        X[leaving] = 0.0
        basis.remove(leaving)
        basis.append((i0, j0))
        streak = streak + 1 if theta == 0.0 else 0
    else:
        raise InvariantError(f"transportation simplex did not finish within {max_pivots} pivots")

    X = np.maximum(X, 0.0)
    plan = TransportPlan(X, feasible_for=(r_m, c_m))
    value = float(np.sum(X * C))
    return ExactSolution(plan, value, (u, v))
