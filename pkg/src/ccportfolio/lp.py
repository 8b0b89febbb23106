"""Dense revised simplex and best-first branch-and-bound for 0-1 linear models."""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .models import OptimizationModel

__all__ = [
    "LpSolution",
    "BbSolution",
    "UnsupportedModelError",
    "Tolerances",
    "solve_lp",
    "solve_binary_bb",
    "lagrangian_bound",
]


class UnsupportedModelError(ValueError):
    """The model has features the linear solvers do not handle."""


@dataclass
class Tolerances:
    feasibility: float = 1e-7
    optimality: float = 1e-9
    pivot: float = 1e-11
    integrality: float = 1e-6
    gap: float = 1e-9
    refactor_every: int = 50
    degenerate_switch: int = 30


DEFAULT_TOL = Tolerances()


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded"
    objective: float
    x: np.ndarray | None
    basis: list = field(default_factory=list)
    iterations: int = 0
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None


@dataclass
class BbSolution:
    status: str  # "optimal" | "feasible-at-limit" | "infeasible" | "limit-no-incumbent"
    x: np.ndarray | None
    objective: float
    bound: float
    nodes: int
    wall_time: float
    lp_iterations: int = 0

    @property
    def gap(self) -> float:
        if self.x is None or not math.isfinite(self.bound):
            return math.inf
        return (self.objective - self.bound) / max(1.0, abs(self.objective))


class _LpData:
    """Dense copy of a linear model's rows, reused across branch-and-bound nodes."""

    def __init__(self, model: OptimizationModel):
        if not model.is_linear:
            raise UnsupportedModelError("solve_lp needs a model without quadratic terms")
        if not (np.all(np.isfinite(model.lower)) and np.all(np.isfinite(model.upper))):
            raise UnsupportedModelError("solve_lp needs finite bounds on every variable")
        self.model = model
        A = model.A.toarray()
        sign = np.array([-1.0 if s == ">=" else 1.0 for s in model.senses])
        self.row_sign = sign
        self.A = A * sign[:, None]
        self.b = model.rhs * sign
        self.is_eq = np.array([s == "=" for s in model.senses], dtype=bool)
        self.c = np.asarray(model.linear, float)
        self.constant = model.constant


def _simplex(A, b, is_eq, c, ub, tol: Tolerances, max_iter=None):
    """Bounded-variable revised simplex for ``min c x, A x (<=|=) b, 0 <= x <= ub``.

    Rows of ``A`` are assumed scaled. Returns ``(status, x, basis, y, iters)``
    where ``y`` are the row duals of the scaled problem.
    """
    m, n = A.shape
    ineq = np.flatnonzero(~is_eq)
    ns = ineq.size
    # slack columns, then artificials where the slack cannot start basic
    need_art = is_eq | (b < 0)
    art_rows = np.flatnonzero(need_art)
    na = art_rows.size
    N = n + ns + na
    M = np.zeros((m, N))
    M[:, :n] = A
    M[ineq, n + np.arange(ns)] = 1.0
    art_sign = np.where(b[art_rows] >= 0, 1.0, -1.0)
    M[art_rows, n + ns + np.arange(na)] = art_sign
    upper = np.concatenate([ub, np.full(ns, np.inf), np.full(na, np.inf)])
    x = np.zeros(N)
    basis = np.empty(m, dtype=np.int64)
    slack_of_row = np.full(m, -1)
    slack_of_row[ineq] = n + np.arange(ns)
    art_of_row = np.full(m, -1)
    art_of_row[art_rows] = n + ns + np.arange(na)
    for r in range(m):
        basis[r] = art_of_row[r] if need_art[r] else slack_of_row[r]
    x[basis] = np.abs(b)
    at_upper = np.zeros(N, dtype=bool)
    is_basic = np.zeros(N, dtype=bool)
    is_basic[basis] = True
    iters = 0
    max_iter = max_iter or 50 * (m + N) + 1000

    def run(cost):
        nonlocal Binv, iters
        since_refactor = 0
        degenerate = 0
        bland = False
        while True:
            if since_refactor >= tol.refactor_every:
                Binv = np.linalg.inv(M[:, basis])
                xN = np.where(is_basic, 0.0, x)
                x[basis] = Binv @ (b - M @ xN)
                since_refactor = 0
            y = cost[basis] @ Binv
            d = cost - y @ M
            movable = (~is_basic) & (upper > 0)
            cand = movable & (((~at_upper) & (d < -tol.optimality)) | (at_upper & (d > tol.optimality)))
            if not cand.any():
                return "optimal", y
            if iters >= max_iter:
                return "iteration-limit", y
            idx = np.flatnonzero(cand)
            q = int(idx[0]) if bland else int(idx[np.argmax(np.abs(d[idx]))])
            direction = -1.0 if at_upper[q] else 1.0
            alpha = Binv @ M[:, q]
            da = direction * alpha
            theta = upper[q]
            leave = -1
            xb = x[basis]
            ub_b = upper[basis]
            dec = da > tol.pivot
            inc = da < -tol.pivot
            ratios = np.full(m, np.inf)
            ratios[dec] = np.maximum(xb[dec], 0.0) / da[dec]
            with np.errstate(invalid="ignore"):
                ratios[inc] = np.maximum(ub_b[inc] - xb[inc], 0.0) / (-da[inc])
            rmin = ratios.min() if m else np.inf
            if rmin < theta:
                near = np.flatnonzero(ratios <= rmin + 1e-12 * max(1.0, rmin))
                if bland:
                    leave = int(near[np.argmin(basis[near])])
                else:
                    leave = int(near[np.argmax(np.abs(da[near]))])
                theta = ratios[leave]
            if not math.isfinite(theta):
                return "unbounded", y
            iters += 1
            x[basis] = xb - theta * da
            x[q] += direction * theta
            if theta <= 1e-12:
                degenerate += 1
                if degenerate > tol.degenerate_switch:
                    bland = True
            else:
                degenerate = 0
                bland = False
            if leave < 0:
                at_upper[q] = not at_upper[q]
                x[q] = upper[q] if at_upper[q] else 0.0
                continue
            out = basis[leave]
            to_upper = bool(inc[leave])
            x[out] = upper[out] if to_upper else 0.0
            at_upper[out] = to_upper
            is_basic[out] = False
            is_basic[q] = True
            at_upper[q] = False
            basis[leave] = q
            piv = alpha[leave]
            row = Binv[leave] / piv
            Binv -= np.outer(alpha, row)
            Binv[leave] = row
            since_refactor += 1

    Binv = np.linalg.inv(M[:, basis])
    if na:
        cost1 = np.zeros(N)
        cost1[n + ns:] = 1.0
        status, _ = run(cost1)
        infeas = x[n + ns:].sum()
        if status != "optimal" or infeas > tol.feasibility * max(1.0, np.abs(b).max()):
            return "infeasible", None, basis, None, iters
        upper[n + ns:] = 0.0
        x[n + ns:] = 0.0
        at_upper[n + ns:] = False
    cost2 = np.concatenate([c, np.zeros(ns + na)])
    status, y = run(cost2)
    return status, x[:n].copy(), basis.copy(), y, iters


def _solve_data(data: _LpData, lower, upper, tol: Tolerances) -> LpSolution:
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    if np.any(upper < lower - tol.feasibility):
        return LpSolution("infeasible", math.inf, None)
    fixed = upper - lower <= 0
    free = np.flatnonzero(~fixed)
    A_f = data.A[:, free]
    b = data.b - data.A[:, fixed] @ lower[fixed] - A_f @ lower[free]
    const = data.constant + data.c[fixed] @ lower[fixed] + data.c[free] @ lower[free]
    # drop rows left empty by presolve after checking them
    scale = np.abs(A_f).max(axis=1) if free.size else np.zeros(A_f.shape[0])
    empty = scale <= 0
    if empty.any():
        bad = np.where(data.is_eq[empty], np.abs(b[empty]), -b[empty])
        if np.any(bad > tol.feasibility * np.maximum(1.0, np.abs(data.b[empty]))):
            return LpSolution("infeasible", math.inf, None)
    keep = ~empty
    A_s = A_f[keep] / scale[keep, None]
    b_s = b[keep] / scale[keep]
    c_f = data.c[free]
    cscale = np.abs(c_f).max() if free.size and np.abs(c_f).max() > 0 else 1.0
    status, xs, basis, y, iters = _simplex(A_s, b_s, data.is_eq[keep], c_f / cscale,
                                           upper[free] - lower[free], tol)
    if status != "optimal":
        return LpSolution(status, math.inf if status == "infeasible" else -math.inf, None,
                          iterations=iters)
    x = lower.copy()
    x[free] += xs
    x = np.clip(x, lower, upper)
    duals = np.zeros(data.A.shape[0])
    duals[np.flatnonzero(keep)] = y * cscale / scale[keep]
    duals *= data.row_sign
    rc = data.c - data.model.A.T @ duals
    obj = float(data.c @ x + data.constant)
    return LpSolution("optimal", obj, x, list(map(int, basis)), iters, duals, rc)


def solve_lp(model: OptimizationModel, relax_integrality: bool = True, lower=None,
             upper=None, tol: Tolerances = DEFAULT_TOL) -> LpSolution:
    """Solve the linear (relaxation of the) model.

    Parameters
    ----------
    model : OptimizationModel
        Must have no quadratic terms and finite bounds.
    relax_integrality : bool
        Binary variables are treated as continuous in ``[0, 1]``. Passing
        ``False`` is rejected; use :func:`solve_binary_bb` instead.
    lower, upper : array_like, optional
        Bound overrides, e.g. from branching.
    """
    if not relax_integrality:
        raise UnsupportedModelError("integer solutions need solve_binary_bb")
    data = model if isinstance(model, _LpData) else _LpData(model)
    lo = data.model.lower if lower is None else lower
    up = data.model.upper if upper is None else upper
    return _solve_data(data, lo, up, tol)


def lagrangian_bound(model: OptimizationModel, duals, lower=None, upper=None) -> float:
    """Lower bound ``y b + sum_j min_{l_j <= x_j <= u_j} (c_j - A_j^T y) x_j``.

    Returns ``-inf`` if ``duals`` has the wrong sign for an inequality row.
    """
    lower = model.lower if lower is None else np.asarray(lower, float)
    upper = model.upper if upper is None else np.asarray(upper, float)
    y = np.asarray(duals, float)
    for r, s in enumerate(model.senses):
        if (s == "<=" and y[r] > 1e-9) or (s == ">=" and y[r] < -1e-9):
            return -math.inf
    rc = model.linear - model.A.T @ y
    return float(y @ model.rhs + np.minimum(rc * lower, rc * upper).sum() + model.constant)


def _most_fractional(x, binary_idx, tol):
    v = x[binary_idx]
    frac = np.abs(v - np.round(v))
    mask = frac > tol
    if not mask.any():
        return -1
    cand = np.flatnonzero(mask)
    score = np.abs(v[cand] - 0.5)
    return int(binary_idx[cand[np.argmin(score)]])  # argmin keeps the lowest index on ties


def solve_binary_bb(model: OptimizationModel, time_limit: float = 3600.0,
                    node_limit: int | None = None, tol: Tolerances = DEFAULT_TOL,
                    node_log=None) -> BbSolution:
    """Best-first branch-and-bound on LP relaxation bounds.

    Branches on the most fractional binary (ties broken by lowest index);
    the open node with the smallest bound is expanded next, ties in
    insertion order.

    Parameters
    ----------
    node_log : file-like, optional
        Receives ``node,depth,bound,incumbent,gap`` CSV lines.
    """
    start = time.perf_counter()
    data = _LpData(model)
    binary_idx = np.flatnonzero(model.binary)
    inc_x, inc_obj = None, math.inf
    heap: list = []
    counter = 0
    nodes = 0
    lp_iters = 0
    if node_log is not None:
        node_log.write("node,depth,bound,incumbent,gap\n")

    def gap_tol(obj):
        return tol.gap * max(1.0, abs(obj))

    def evaluate(lo, up, depth):
        nonlocal inc_x, inc_obj, counter, nodes, lp_iters
        sol = _solve_data(data, lo, up, tol)
        nodes += 1
        lp_iters += sol.iterations
        if node_log is not None:
            g = (inc_obj - sol.objective) / max(1.0, abs(inc_obj)) if math.isfinite(inc_obj) else math.inf
            node_log.write(f"{nodes},{depth},{sol.objective!r},{inc_obj!r},{g!r}\n")
        if sol.status != "optimal":
            return
        if sol.objective >= inc_obj - gap_tol(inc_obj):
            return
        j = _most_fractional(sol.x, binary_idx, tol.integrality)
        if j < 0:
            xr = sol.x.copy()
            xr[binary_idx] = np.round(xr[binary_idx])
            obj = float(model.objective(xr))
            if obj < inc_obj:
                inc_x, inc_obj = xr, obj
            return
        heapq.heappush(heap, (sol.objective, counter, depth, lo, up, j))
        counter += 1

    evaluate(np.array(model.lower, float), np.array(model.upper, float), 0)
    hit_limit = False
    while heap:
        bound, _, depth, lo, up, j = heap[0]
        if bound >= inc_obj - gap_tol(inc_obj):
            heap.clear()
            break
        if (node_limit is not None and nodes >= node_limit) or time.perf_counter() - start > time_limit:
            hit_limit = True
            break
        heapq.heappop(heap)
        for val in (0.0, 1.0):
            lo2, up2 = lo.copy(), up.copy()
            lo2[j] = up2[j] = val
            evaluate(lo2, up2, depth + 1)

    elapsed = time.perf_counter() - start
    if hit_limit:
        bound = min(inc_obj, heap[0][0]) if heap else inc_obj
        status = "feasible-at-limit" if inc_x is not None else "limit-no-incumbent"
        return BbSolution(status, inc_x, inc_obj, bound, nodes, elapsed, lp_iters)
    if inc_x is None:
        return BbSolution("infeasible", None, math.inf, math.inf, nodes, elapsed, lp_iters)
    return BbSolution("optimal", inc_x, inc_obj, inc_obj, nodes, elapsed, lp_iters)
