"""Exact desk-scale solvers for the quadratic models."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .factors import MultiFactorModel, SingleFactorModel, as_multi, implied_covariance
from .lp import DEFAULT_TOL, _LpData, _solve_data
from .models import MewcpInstance, _Builder

__all__ = [
    "CapExceededError",
    "SubsetSolution",
    "RelaxationResult",
    "ew_objective",
    "brute_force_ew",
    "brute_force_clique",
    "qp_support",
    "brute_force_ccmv",
    "solve_relaxation_sf",
    "solve_ew_sf_bb",
]

DEFAULT_CAP = 50_000_000
_CHUNK = 200_000


class CapExceededError(RuntimeError):
    """Enumeration would exceed the evaluation cap."""


@dataclass(frozen=True)
class SubsetSolution:
    support: tuple
    weights: np.ndarray
    objective: float
    enumerated: int


def ew_objective(instance, support) -> float:
    """Equal-weight variance of holding ``support`` at ``1/|support|`` each."""
    s = np.asarray(support, dtype=int)
    k = s.size
    if isinstance(instance, SingleFactorModel):
        bs = instance.beta[s].sum()
        return float((instance.sigma_f2 * bs * bs + instance.sigma_eps2[s].sum()) / k**2)
    mf = as_multi(instance)
    bs = mf.B[:, s].sum(axis=1)
    return float((bs @ mf.Sigma_F @ bs + mf.sigma_eps2[s].sum()) / k**2)


def _combination_chunks(n, k, chunk=_CHUNK):
    it = itertools.combinations(range(n), k)
    while True:
        flat = np.fromiter(itertools.chain.from_iterable(itertools.islice(it, chunk)),
                           dtype=np.int64)
        if flat.size == 0:
            return
        yield flat.reshape(-1, k)


def _check_cap(count, n_cap):
    if count > n_cap:
        raise CapExceededError(f"enumeration needs {count} evaluations, cap is {n_cap}")


def brute_force_ew(instance, K: int, n_cap: int = DEFAULT_CAP) -> SubsetSolution:
    """Minimise the equal-weight objective over every ``K``-subset.

    Ties go to the lexicographically smallest support.
    """
    n = instance.n if isinstance(instance, SingleFactorModel) else as_multi(instance).n
    if not 1 <= K <= n:
        raise ValueError(f"K={K} must lie in [1, {n}]")
    _check_cap(math.comb(n, K), n_cap)
    if isinstance(instance, SingleFactorModel):
        B = instance.beta[:, None] * instance.sigma_f
        S = np.eye(1)
    else:
        mf = as_multi(instance)
        B, S = mf.B.T, mf.Sigma_F
    eps = instance.sigma_eps2
    best_val, best = math.inf, None
    count = 0
    for combos in _combination_chunks(n, K):
        bs = B[combos].sum(axis=1)
        vals = (np.einsum("ij,jk,ik->i", bs, S, bs) + eps[combos].sum(axis=1)) / K**2
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best = float(vals[j]), tuple(int(v) for v in combos[j])
        count += combos.shape[0]
    w = np.zeros(n)
    w[list(best)] = 1.0 / K
    return SubsetSolution(best, w, best_val, count)


def brute_force_clique(inst: MewcpInstance, n_cap: int = DEFAULT_CAP) -> SubsetSolution:
    """Heaviest ``k``-clique by enumeration (lexicographic tie-break)."""
    n, k = inst.n, inst.k
    _check_cap(math.comb(n, k), n_cap)
    pairs = list(itertools.combinations(range(k), 2))
    best_val, best = -math.inf, None
    count = 0
    for combos in _combination_chunks(n, k):
        tot = np.zeros(combos.shape[0])
        for a, b in pairs:
            tot += inst.c[combos[:, a], combos[:, b]]
        j = int(np.argmax(tot))
        if tot[j] > best_val:
            best_val, best = float(tot[j]), tuple(int(v) for v in combos[j])
        count += combos.shape[0]
    w = np.zeros(n)
    w[list(best)] = 1.0 / k
    return SubsetSolution(best, w, best_val, count)


def _kkt_step(Sig, w, free):
    g = 2.0 * Sig @ w
    F = np.flatnonzero(free)
    k = F.size
    H = np.zeros((k + 1, k + 1))
    H[:k, :k] = 2.0 * Sig[np.ix_(F, F)]
    H[:k, k] = H[k, :k] = 1.0
    rhs = np.concatenate([-g[F], [0.0]])
    try:
        sol = np.linalg.solve(H, rhs)
    except np.linalg.LinAlgError:
        ridge = 1e-12 * max(1.0, np.abs(np.diag(Sig)).max())
        H[np.arange(k), np.arange(k)] += ridge
        try:
            sol = np.linalg.solve(H, rhs)
        except np.linalg.LinAlgError as exc:
            raise RuntimeError("singular KKT system on support") from exc
    p = np.zeros_like(w)
    p[F] = sol[:k]
    return p, g


def qp_support(cov, support, max_iter: int = 500) -> np.ndarray:
    """Long-only minimum-variance weights restricted to ``support``.

    Primal active-set method: each iteration solves the KKT system of the
    equality-constrained problem on the free assets, steps until a weight
    hits zero (which then joins the active set), and releases an active
    asset when its multiplier is negative.

    Parameters
    ----------
    cov : ndarray or factor model
        Covariance matrix ``n x n`` (a factor model is converted with
        :func:`implied_covariance`).
    support : sequence of int

    Returns
    -------
    ndarray
        Length-``n`` weight vector, zero off ``support``, summing to one.
    """
    if not isinstance(cov, np.ndarray):
        cov = implied_covariance(cov)
    S = np.unique(np.asarray(support, dtype=int))
    if S.size == 0:
        raise ValueError("support must be non-empty")
    n = cov.shape[0]
    Sig = cov[np.ix_(S, S)]
    k = S.size
    w = np.full(k, 1.0 / k)
    free = np.ones(k, dtype=bool)
    scale = max(np.abs(np.diag(Sig)).max(), 1e-300)
    for _ in range(max_iter):
        p, g = _kkt_step(Sig, w, free)
        if np.abs(p).max() <= 1e-13:
            nu = g[free].mean()
            mu = np.where(free, np.inf, g - nu)
            j = int(np.argmin(mu))
            if mu[j] >= -1e-12 * scale:
                break
            free[j] = True
            continue
        neg = free & (p < 0)
        step, block = 1.0, -1
        if neg.any():
            ratios = np.full(k, np.inf)
            ratios[neg] = -w[neg] / p[neg]
            block = int(np.argmin(ratios))
            if ratios[block] < 1.0:
                step = ratios[block]
            else:
                block = -1
        w = w + step * p
        if block >= 0:
            w[block] = 0.0
            free[block] = False
    w = np.where(w < 0, 0.0, w)  # only round-off negatives remain here
    w /= w.sum()
    out = np.zeros(n)
    out[S] = w
    return out


def brute_force_ccmv(model, K: int, n_cap: int = DEFAULT_CAP) -> SubsetSolution:
    """Best long-only minimum-variance portfolio holding at most ``K`` assets.

    Every support of size ``min(K, n)`` is optimised with :func:`qp_support`;
    smaller supports are covered because weights may be zero.
    """
    cov = implied_covariance(model)
    n = cov.shape[0]
    if K < 1:
        raise ValueError("K must be positive")
    k = min(K, n)
    _check_cap(sum(math.comb(n, j) for j in range(1, k + 1)), n_cap)
    best_val, best_w = math.inf, None
    count = 0
    for S in itertools.combinations(range(n), k):
        w = qp_support(cov, S)
        v = float(w @ cov @ w)
        count += 1
        if v < best_val - 1e-15 * abs(best_val if math.isfinite(best_val) else 0.0):
            best_val, best_w = v, w
    support = tuple(int(i) for i in np.flatnonzero(best_w > 0))
    return SubsetSolution(support, best_w, best_val, count)


@dataclass(frozen=True)
class RelaxationResult:
    x: np.ndarray
    objective: float
    fractional_count: int
    exposure: float  # sum_i beta_i x_i
    lp_solves: int = 0


class _InnerLp:
    """``min sum eps_i x_i  s.t. sum beta_i x_i = b, sum x_i = k, 0 <= x <= 1``."""

    def __init__(self, beta, eps, k):
        bld = _Builder()
        idx = bld.add_vars([f"x_{i}" for i in range(beta.size)], False, 0.0, 1.0)
        bld.add_row(idx, beta, "=", 0.0, "exposure")
        bld.add_row(idx, 1.0, "=", k, "cardinality")
        self.model = bld.build("inner", eps)
        self.data = _LpData(self.model)
        self.k = k
        self.solves = 0

    def __call__(self, b):
        self.data.b = np.array([b, self.k], dtype=float)
        self.solves += 1
        return _solve_data(self.data, self.model.lower, self.model.upper, DEFAULT_TOL)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def solve_relaxation_sf(instance: SingleFactorModel, K: int, fixed_one=(), fixed_zero=(),
                        max_iter: int = 200, rel_width: float = 1e-10,
                        frac_tol: float = 1e-6) -> RelaxationResult:
    """Continuous relaxation of the single-factor equal-weight problem.

    Minimises ``(sigma_f2 (beta^T x)^2 + eps^T x) / K^2`` over ``0 <= x <= 1``,
    ``sum x = K`` (optionally with some coordinates fixed). The value as a
    function of the exposure ``b = beta^T x`` is convex, so a golden-section
    search over ``b`` with an inner LP in ``x`` solves it to tolerance.
    """
    n = instance.n
    if not 1 <= K <= n:
        raise ValueError(f"K={K} must lie in [1, {n}]")
    ones = np.asarray(sorted(set(int(i) for i in fixed_one)), dtype=int)
    zeros = np.asarray(sorted(set(int(i) for i in fixed_zero)), dtype=int)
    free = np.setdiff1d(np.arange(n), np.concatenate([ones, zeros]))
    kf = K - ones.size
    beta, eps, sf2 = instance.beta, instance.sigma_eps2, instance.sigma_f2
    b0 = beta[ones].sum()
    a0 = eps[ones].sum()
    x = np.zeros(n)
    x[ones] = 1.0
    if kf < 0 or kf > free.size:
        return RelaxationResult(x, math.inf, 0, math.nan)
    if kf == 0 or kf == free.size:
        x[free] = 1.0 if kf else 0.0
        b = beta @ x
        return RelaxationResult(x, (sf2 * b * b + eps @ x) / K**2, 0, float(b))

    bf, ef = beta[free], eps[free]
    srt = np.sort(bf)
    lo, hi = srt[:kf].sum(), srt[-kf:].sum()
    lp = _InnerLp(bf, ef, kf)

    def value(b):
        sol = lp(b)
        if sol.status != "optimal":
            return math.inf, None
        return (sf2 * (b0 + b) ** 2 + a0 + sol.objective) / K**2, sol

    width = hi - lo
    if width <= 1e-15 * max(1.0, abs(hi)):
        b_best = 0.5 * (lo + hi)
    else:
        a, d = lo, hi
        c1 = d - _INV_PHI * (d - a)
        c2 = a + _INV_PHI * (d - a)
        f1, f2 = value(c1)[0], value(c2)[0]
        for _ in range(max_iter):
            if d - a <= rel_width * width:
                break
            if f1 <= f2:
                d, c2, f2 = c2, c1, f1
                c1 = d - _INV_PHI * (d - a)
                f1 = value(c1)[0]
            else:
                a, c1, f1 = c1, c2, f2
                c2 = a + _INV_PHI * (d - a)
                f2 = value(c2)[0]
        b_best = 0.5 * (a + d)
        # the optimum may sit on the bracket ends
        for cand in (lo, hi):
            if value(cand)[0] < value(b_best)[0]:
                b_best = cand
    obj, sol = value(b_best)
    if sol is None:
        # shrink onto the achievable range if round-off pushed b outside
        b_best = min(max(b_best, lo), hi)
        obj, sol = value(b_best)
    x[free] = sol.x
    xf = x[free]
    frac = int(np.count_nonzero((xf > frac_tol) & (xf < 1.0 - frac_tol)))
    return RelaxationResult(x, float(obj), frac, float(beta @ x), lp.solves)


def solve_ew_sf_bb(instance: SingleFactorModel, K: int, time_limit: float = 3600.0,
                   node_limit: int | None = None, gap: float = 1e-9):
    """Exact equal-weight single-factor solve by best-first branch-and-bound.

    Node bounds come from :func:`solve_relaxation_sf`, whose optimum has at
    most two fractional coordinates, so trees stay small.

    Returns
    -------
    (SubsetSolution, dict)
        The solution and search statistics (``status``, ``nodes``, ``bound``).
    """
    start = time.perf_counter()
    heap = []
    counter = 0
    nodes = 0
    inc_val, inc = math.inf, None

    def evaluate(ones, zeros):
        nonlocal counter, nodes, inc_val, inc
        r = solve_relaxation_sf(instance, K, ones, zeros)
        nodes += 1
        if not math.isfinite(r.objective) or r.objective >= inc_val - gap * max(1.0, abs(inc_val)):
            return
        fr = np.flatnonzero((r.x > 1e-6) & (r.x < 1 - 1e-6))
        if fr.size == 0:
            S = tuple(int(i) for i in np.flatnonzero(r.x > 0.5))
            v = ew_objective(instance, S)
            if v < inc_val:
                inc_val, inc = v, S
            return
        j = int(fr[np.argmin(np.abs(r.x[fr] - 0.5))])
        heapq.heappush(heap, (r.objective, counter, ones, zeros, j))
        counter += 1

    evaluate((), ())
    status = "optimal"
    while heap:
        bound, _, ones, zeros, j = heap[0]
        if bound >= inc_val - gap * max(1.0, abs(inc_val)):
            heap.clear()
            break
        if (node_limit is not None and nodes >= node_limit) or time.perf_counter() - start > time_limit:
            status = "feasible-at-limit" if inc is not None else "limit-no-incumbent"
            break
        heapq.heappop(heap)
        evaluate(ones, zeros + (j,))
        evaluate(ones + (j,), zeros)
    bound = min(inc_val, heap[0][0]) if heap else inc_val
    w = np.zeros(instance.n)
    if inc is not None:
        w[list(inc)] = 1.0 / K
    sol = SubsetSolution(inc, w, inc_val, nodes)
    return sol, {"status": status, "nodes": nodes, "bound": bound,
                 "wall_time": time.perf_counter() - start}
