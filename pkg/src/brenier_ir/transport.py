"""Exact discrete optimal transport with uniform marginals.

The Kantorovich linear program is solved by the network simplex routine of
POT (``ot.emd``), which returns a basic (vertex) optimal plan together with
the dual potentials of the transportation LP. A factorial brute-force Monge
solver is provided as an independent oracle for small square problems.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog

# POT probes every installed array backend at import time; only numpy is used.
for _backend in ("PYTORCH", "JAX", "CUPY", "TENSORFLOW"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")

import ot  # noqa: E402

__all__ = [
    "TransportPlan",
    "DualPotentials",
    "OtSolution",
    "squared_l2_cost",
    "solve_discrete_ot",
    "solve_pooled_ot",
    "brute_force_monge",
    "recover_vertex_plan",
    "max_margin_potential",
]

MARGINAL_TOL = 1e-9
SUPPORT_TOL = 1e-12
MAX_BRUTE_FORCE = 9


@dataclass(frozen=True)
class TransportPlan:
    """Coupling in the scaled Birkhoff polytope B(n, k)."""

    weights: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    @property
    def row_marginal(self) -> np.ndarray:
        n = self.weights.shape[0]
        return np.full(n, 1.0 / n)

    @property
    def col_marginal(self) -> np.ndarray:
        k = self.weights.shape[1]
        return np.full(k, 1.0 / k)

    def is_feasible(self, tol: float = MARGINAL_TOL) -> bool:
        w = self.weights
        return bool(
            np.all(w >= -tol)
            and np.allclose(w.sum(axis=1), self.row_marginal, rtol=0, atol=tol)
            and np.allclose(w.sum(axis=0), self.col_marginal, rtol=0, atol=tol)
            and abs(w.sum() - 1.0) <= tol
        )

    def support(self, tol: float = SUPPORT_TOL) -> np.ndarray:
        return self.weights > tol

    def is_permutation_vertex(self, tol: float = MARGINAL_TOL) -> bool:
        n, k = self.weights.shape
        if n != k:
            return False
        w = self.weights
        big = w > 0.5 / n
        return bool(
            np.all(big.sum(axis=1) == 1)
            and np.all(big.sum(axis=0) == 1)
            and np.allclose(w[big], 1.0 / n, rtol=0, atol=tol)
            and np.all(w[~big] <= tol)
        )

    def permutation(self) -> np.ndarray:
        """Index map ``i -> argmax_j P_ij`` (meaningful for vertex plans)."""
        return np.argmax(self.weights, axis=1)

    def cost(self, C: np.ndarray) -> float:
        return float(np.sum(C * self.weights))


@dataclass(frozen=True)
class DualPotentials:
    """Kantorovich potentials ``f`` (sources) and ``g`` (targets), g[0] == 0."""

    f: np.ndarray
    g: np.ndarray

    def value(self) -> float:
        return float(self.f.mean() + self.g.mean())

    def slack(self, C: np.ndarray) -> np.ndarray:
        """``C_ij - f_i - g_j``; nonnegative for feasible potentials."""
        return C - self.f[:, None] - self.g[None, :]


@dataclass(frozen=True)
class OtSolution:
    plan: TransportPlan
    duals: DualPotentials
    primal_cost: float
    dual_value: float
    cost: np.ndarray

    @property
    def duality_gap(self) -> float:
        return abs(self.primal_cost - self.dual_value)


def squared_l2_cost(Z, U) -> np.ndarray:
    """Pairwise squared Euclidean distances ``C_ij = ||z_i - u_j||^2``.

    Both inputs are interpreted as point sets with one point per row; 1-D
    inputs are treated as scalar points. No 1/2 factor is applied.
    """
    Z = _as_points(Z, "Z")
    U = _as_points(U, "U")
    if Z.shape[1] != U.shape[1]:
        raise ValueError(
            f"dimension mismatch: Z has {Z.shape[1]} columns, U has {U.shape[1]}"
        )
    diff = Z[:, None, :] - U[None, :, :]
    return np.einsum("ijl,ijl->ij", diff, diff)


def solve_discrete_ot(C) -> OtSolution:
    """Solve ``min <C, P>`` over B(n, k) exactly.

    The network simplex returns a vertex of the transportation polytope. The
    dual potentials are shifted so that ``g[0] == 0``; this changes neither
    feasibility nor the dual objective since both marginals have unit mass.

    Raises
    ------
    ValueError
        If ``C`` is not a finite 2-D array with at least one row and column.
    """
    C = _check_cost(C)
    n, k = C.shape
    return _solve(C, np.full(n, 1.0 / n), C)


def solve_pooled_ot(Z, U) -> OtSolution:
    """Uniform-marginal OT for the squared cost, with identical sources pooled.

    Duplicate rows of ``Z`` are merged into one source of proportional mass
    and the merged row of the plan is split evenly among the duplicates. The
    result is an optimal plan of the uniform problem whose rows, potentials
    and barycentric images agree for identical inputs, so the plan no longer
    depends on how the solver breaks ties between interchangeable sources.
    Without duplicates this is exactly ``solve_discrete_ot``.
    """
    C = _check_cost(squared_l2_cost(Z, U))
    n = C.shape[0]
    Z = _as_points(Z, "Z")
    uniq, first, inverse, counts = np.unique(Z, axis=0, return_index=True, return_inverse=True, return_counts=True)
    if uniq.shape[0] == n:
        return _solve(C, np.full(n, 1.0 / n), C)
    inverse = inverse.ravel()
    pooled = _solve(C[first], counts / n, C)
    P = pooled.plan.weights[inverse] / counts[inverse, None]
    duals = DualPotentials(f=pooled.duals.f[inverse], g=pooled.duals.g)
    plan = TransportPlan(weights=P)
    return OtSolution(plan=plan, duals=duals, primal_cost=plan.cost(C), dual_value=duals.value(), cost=C)


def _check_cost(C) -> np.ndarray:
    C = np.ascontiguousarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] < 1 or C.shape[1] < 1:
        raise ValueError(f"cost matrix must be 2-D and non-empty, got shape {C.shape}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost matrix contains non-finite entries")
    return C


def _solve(Cs: np.ndarray, a: np.ndarray, C: np.ndarray) -> OtSolution:
    # Cs carries one row per (possibly pooled) source of mass a; C is the
    # full cost reported on the returned solution.
    n, k = Cs.shape
    b = np.full(k, 1.0 / k)
    max_iter = max(100_000, 100 * n * k)
    P, log = ot.emd(a, b, Cs, numItermax=max_iter, log=True, center_dual=False)
    if log.get("warning"):
        raise RuntimeError(f"network simplex did not converge: {log['warning']}")
    P = np.asarray(P, dtype=np.float64)
    f = np.asarray(log["u"], dtype=np.float64)
    g = np.asarray(log["v"], dtype=np.float64)
    shift = g[0]
    duals = DualPotentials(f=f + shift, g=g - shift)
    plan = TransportPlan(weights=P)
    return OtSolution(
        plan=plan,
        duals=duals,
        primal_cost=plan.cost(Cs),
        dual_value=float(a @ duals.f + duals.g.mean()),
        cost=C,
    )


def brute_force_monge(C) -> tuple[np.ndarray, float]:
    """Enumerate all permutations of a square cost matrix.

    Returns the minimizing permutation and ``(1/n) sum_i C[i, sigma(i)]``.
    Among (numerically) tied permutations the lexicographically smallest wins.
    """
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"brute force Monge needs a square cost, got {C.shape}")
    n = C.shape[0]
    if n < 1 or n > MAX_BRUTE_FORCE:
        raise ValueError(f"brute force Monge limited to 1 <= n <= {MAX_BRUTE_FORCE}, got n={n}")
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    costs = C[np.arange(n), perms].sum(axis=1) / n
    best = costs.min()
    # itertools yields lexicographic order, so the first near-minimal entry wins.
    first = int(np.flatnonzero(costs <= best + 1e-12 * max(1.0, abs(best)))[0])
    return perms[first], float(costs[first])


def recover_vertex_plan(solution: OtSolution) -> TransportPlan:
    """Return an optimal plan that is ``1/n`` times a permutation matrix.

    Any doubly stochastic matrix contains a permutation in its support, and
    every permutation supported on an optimal plan is itself optimal, so a
    zero/one assignment problem over the support recovers a vertex.
    """
    plan = solution.plan
    n, k = plan.shape
    if n != k:
        raise ValueError(f"vertex recovery requires a square plan, got {n}x{k}")
    if plan.is_permutation_vertex():
        return plan
    support = plan.support()
    rows, cols = linear_sum_assignment(np.where(support, 0.0, 1.0))
    if not np.all(support[rows, cols]):
        raise RuntimeError("plan support does not contain a perfect matching")
    weights = np.zeros((n, n))
    weights[rows, cols] = 1.0 / n
    vertex = TransportPlan(weights=weights)
    if abs(vertex.cost(solution.cost) - solution.primal_cost) > 1e-9 * max(1.0, abs(solution.primal_cost)):
        raise RuntimeError("recovered vertex is not cost-equivalent to the input plan")
    return vertex


def max_margin_potential(solution: OtSolution, tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Optimal target potential that keeps sources furthest from cell boundaries.

    Optimal potentials ``g`` are exactly those for which every supported
    pair ``(i, j)`` of the plan minimises ``C_ij - g_j`` over ``j``; with
    atoms in the source they form a polytope and a solver vertex typically
    places atoms on a boundary between Laguerre cells. This solves

        max t  s.t.  C_ij - g_j + t <= C_ij' - g_j'  for P_ij > 0, P_ij' = 0

    with ``g[0] = 0`` and returns ``(g, t)``. A source split over several
    targets must tie them exactly; the tie is instead resolved towards the
    target receiving most of its mass by a gap between ``sigma / 2`` and
    ``sigma``, where ``sigma = 1e-10 * max(1, range(C))`` keeps complementary
    slackness far inside its 1e-8 tolerance. If that is infeasible the exact
    ties are kept, and if the LP fails the plan's own potential is returned
    with ``t = 0``.
    """
    C = solution.cost
    n, k = C.shape
    g0 = solution.duals.g
    P = solution.plan.weights
    if k == 1:
        return g0, 0.0
    rows = np.unique(np.hstack([C, P]), axis=0)
    C, P = rows[:, :k], rows[:, k:]
    support = P > tol
    sigma = 1e-10 * max(1.0, float(np.ptp(C)))
    for gap in (sigma, 0.0):
        res = _margin_lp(C, P, support, gap)
        if res is not None and _verify_potential(C, P, support, res[0], gap):
            return res
    return g0, 0.0


def _verify_potential(C, P, support, g, sigma) -> bool:
    # The LP solver works to its own feasibility tolerance; re-check directly.
    S = C - g[None, :]
    f = S.min(axis=1, keepdims=True)
    if np.any((S - f)[support] > 1e-9 * max(1.0, float(np.ptp(C)))):
        return False
    if sigma > 0:
        split = support.sum(axis=1) > 1
        dom = np.argmax(np.where(support, P, -np.inf), axis=1)
        best = np.argmin(S, axis=1)
        if np.any(best[split] != dom[split]):
            return False
    return True


def _margin_lp(C, P, support, sigma):
    k = C.shape[1]
    r, c, v, rhs = [], [], [], []
    n_rows = 0

    def add(cols, coefs, bound):
        nonlocal n_rows
        m = bound.size
        idx = np.arange(n_rows, n_rows + m)
        for col, coef in zip(cols, coefs):
            r.append(idx)
            c.append(col)
            v.append(np.full(m, coef, dtype=np.float64))
        rhs.append(bound)
        n_rows += m

    eq_r, eq_c, eq_v, eq_b = [], [], [], []
    n_eq = 0
    for Ci, Pi, Si in zip(C, P, support):
        on = np.flatnonzero(Si)
        off = np.flatnonzero(~Si)
        if off.size:
            # g_j' - g_j + t <= C_ij' - C_ij
            jj, jp = np.repeat(on, off.size), np.tile(off, on.size)
            add([jp, jj, np.full(jj.size, k)], [1.0, -1.0, 1.0], Ci[jp] - Ci[jj])
        if on.size < 2:
            continue
        if sigma > 0:
            d = on[np.argmax(Pi[on])]
            rest = on[on != d]
            # sigma/2 <= (C_ij - g_j) - (C_id - g_d) <= sigma
            add([rest, np.full(rest.size, d)], [1.0, -1.0], Ci[rest] - Ci[d] - 0.5 * sigma)
            add([rest, np.full(rest.size, d)], [-1.0, 1.0], sigma - (Ci[rest] - Ci[d]))
        else:
            a, b = on[:-1], on[1:]
            idx = np.arange(n_eq, n_eq + a.size)
            eq_r += [idx, idx]
            eq_c += [b, a]
            eq_v += [np.ones(a.size), -np.ones(a.size)]
            eq_b.append(Ci[b] - Ci[a])
            n_eq += a.size
    if n_rows == 0:
        return None
    A_ub = sparse.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))), shape=(n_rows, k + 1))
    A_eq = b_eq = None
    if n_eq:
        A_eq = sparse.csr_matrix(
            (np.concatenate(eq_v), (np.concatenate(eq_r), np.concatenate(eq_c))), shape=(n_eq, k + 1)
        )
        b_eq = np.concatenate(eq_b)
    cap = 1.0 + float(np.ptp(C))
    bounds = [(0.0, 0.0)] + [(None, None)] * (k - 1) + [(None, cap)]
    cvec = np.zeros(k + 1)
    cvec[k] = -1.0
    res = linprog(
        cvec, A_ub=A_ub, b_ub=np.concatenate(rhs), A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0 or res.x[k] <= 0:
        return None
    g = res.x[:k].copy()
    g[0] = 0.0
    return g, float(res.x[k])


def _as_points(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 1-D or 2-D array, got ndim={X.ndim}")
    return X
