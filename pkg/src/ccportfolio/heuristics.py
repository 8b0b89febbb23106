"""Swap and removal heuristics for the equal-weight single-factor problem.

For a set ``T`` the unnormalised objective is

    obj(T) = sum_{i in T} eps_i + sigma_f2 * (sum_{i in T} beta_i)^2

and the equal-weight variance is ``obj(T) / |T|^2``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .factors import SingleFactorModel

__all__ = [
    "HeuristicTrace",
    "subset_obj",
    "delta_remove",
    "delta_swap",
    "algorithm1",
    "algorithm2",
    "run_heuristic",
    "is_swap_optimal",
    "write_trace_csv",
]

_REL_TOL = 1e-12


@dataclass
class HeuristicTrace:
    """Search history.

    ``iterations`` holds ``(removed, inserted, objective)`` per accepted move,
    ``inserted`` being ``None`` for a pure removal. Objectives are equal-weight
    variances ``obj(S)/|S|^2``.
    """

    initial_K: int
    support: tuple = ()
    iterations: list = field(default_factory=list)
    history: list = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.support)

    @property
    def objective(self) -> float:
        return self.history[-1]


def _as_index(S):
    return np.asarray(sorted(int(i) for i in S), dtype=int)


def subset_obj(instance: SingleFactorModel, S) -> float:
    """Unnormalised objective ``sum eps + sigma_f2 * beta_S^2``."""
    s = _as_index(S)
    bs = instance.beta[s].sum()
    return float(instance.sigma_eps2[s].sum() + instance.sigma_f2 * bs * bs)


def delta_remove(instance: SingleFactorModel, S, j) -> float:
    """``obj(S) - obj(S without j)``, the contribution of ``j`` to ``S``."""
    s = _as_index(S)
    if int(j) not in set(s.tolist()):
        raise ValueError(f"asset {j} is not in the set")
    bs = instance.beta[s].sum()
    rest = bs - instance.beta[j]
    return float(instance.sigma_eps2[j] + instance.sigma_f2 * (bs * bs - rest * rest))


def delta_swap(instance: SingleFactorModel, S, i, j) -> float:
    """``obj(S + i) - obj(S + j)``; negative means ``i`` is the better addition."""
    s = _as_index(S)
    members = set(s.tolist())
    if int(i) in members or int(j) in members:
        raise ValueError("i and j must lie outside S")
    bs = instance.beta[s].sum()
    b, e, f2 = instance.beta, instance.sigma_eps2, instance.sigma_f2
    # factored difference of squares: exactly antisymmetric in (i, j)
    return float((e[i] - e[j]) + f2 * (b[i] - b[j]) * (2.0 * bs + (b[i] + b[j])))


def _contributions(instance, bs):
    b = instance.beta
    rest = bs - b
    return instance.sigma_eps2 + instance.sigma_f2 * (bs * bs - rest * rest)


def _best_insert(instance, mask, bs, es, j):
    """Best replacement for ``j``: lowest objective, ties to the lowest index."""
    b, e, f2 = instance.beta, instance.sigma_eps2, instance.sigma_f2
    rb = bs - b[j]
    cand = es - e[j] + e + f2 * (rb + b) ** 2
    cand = np.where(mask, np.inf, cand)
    i = int(np.argmin(cand))
    return i, float(cand[i])


def algorithm1(instance: SingleFactorModel, K: int, full_scan: bool = True) -> HeuristicTrace:
    """Constructive swap heuristic.

    Starts from the ``K`` lowest-beta assets. Each round removes the asset
    with the largest contribution ``j*`` and inserts the outside asset that
    gives the lowest objective in its place, provided the objective strictly
    decreases.

    Parameters
    ----------
    instance : SingleFactorModel
    K : int
    full_scan : bool
        When the ``j*`` swap does not improve, try the remaining members in
        decreasing order of contribution before stopping. The result is then
        optimal with respect to every single swap. With ``False`` the search
        stops at the first failed ``j*`` swap.
    """
    n = instance.n
    if not 1 <= K <= n:
        raise ValueError(f"K={K} must lie in [1, {n}]")
    order = np.argsort(instance.beta, kind="stable")
    mask = np.zeros(n, dtype=bool)
    mask[order[:K]] = True
    b, e = instance.beta, instance.sigma_eps2
    bs, es = b[mask].sum(), e[mask].sum()
    obj = es + instance.sigma_f2 * bs * bs
    trace = HeuristicTrace(K, history=[obj / K**2])
    while K < n:
        members = np.flatnonzero(mask)
        contrib = _contributions(instance, bs)[members]
        # decreasing contribution, ties to the lowest index
        ranked = members[np.lexsort((members, -contrib))]
        if not full_scan:
            ranked = ranked[:1]
        moved = False
        for j in ranked:
            i, new = _best_insert(instance, mask, bs, es, j)
            if new < obj - _REL_TOL * (1.0 + abs(obj)):
                mask[j], mask[i] = False, True
                # recompute rather than update, so round-off cannot drift
                bs, es = b[mask].sum(), e[mask].sum()
                obj = es + instance.sigma_f2 * bs * bs
                trace.iterations.append((int(j), int(i), obj / K**2))
                trace.history.append(obj / K**2)
                moved = True
                break
        if not moved:
            break
    trace.support = tuple(int(v) for v in np.flatnonzero(mask))
    return trace


def algorithm2(instance: SingleFactorModel, S) -> HeuristicTrace:
    """Drop the largest contributor while that lowers the equal-weight variance.

    The test ``obj(S) > K^2/(K-1)^2 * obj(S - i*)`` is the comparison of
    ``obj(S)/K^2`` with ``obj(S - i*)/(K-1)^2``.
    """
    mask = np.zeros(instance.n, dtype=bool)
    mask[list(S)] = True
    K = int(mask.sum())
    b, e = instance.beta, instance.sigma_eps2
    obj = subset_obj(instance, np.flatnonzero(mask))
    trace = HeuristicTrace(K, history=[obj / K**2])
    while K >= 2:
        members = np.flatnonzero(mask)
        bs = b[members].sum()
        contrib = _contributions(instance, bs)[members]
        i = int(members[np.argmax(contrib)])  # argmax keeps the lowest index on ties
        reduced = obj - float(contrib[np.argmax(contrib)])
        if obj / K**2 > reduced / (K - 1) ** 2 + _REL_TOL * (1.0 + abs(obj)) / K**2:
            mask[i] = False
            K -= 1
            obj = subset_obj(instance, np.flatnonzero(mask))
            trace.iterations.append((i, None, obj / K**2))
            trace.history.append(obj / K**2)
        else:
            break
    trace.support = tuple(int(v) for v in np.flatnonzero(mask))
    return trace


def run_heuristic(instance: SingleFactorModel, K: int, full_scan: bool = True) -> HeuristicTrace:
    """Swap search followed by cardinality reduction, as one trace."""
    t1 = algorithm1(instance, K, full_scan)
    t2 = algorithm2(instance, t1.support)
    return HeuristicTrace(K, t2.support, t1.iterations + t2.iterations,
                          t1.history + t2.history[1:])


def is_swap_optimal(instance: SingleFactorModel, S, rel_tol: float = _REL_TOL) -> bool:
    """True when no single exchange strictly lowers ``obj(S)``."""
    mask = np.zeros(instance.n, dtype=bool)
    mask[list(S)] = True
    if mask.all():
        return True
    b, e = instance.beta, instance.sigma_eps2
    bs, es = b[mask].sum(), e[mask].sum()
    obj = es + instance.sigma_f2 * bs * bs
    for j in np.flatnonzero(mask):
        _, new = _best_insert(instance, mask, bs, es, j)
        if new < obj - rel_tol * (1.0 + abs(obj)):
            return False
    return True


def write_trace_csv(trace: HeuristicTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "removed", "inserted", "objective"])
        w.writerow([0, "", "", repr(trace.history[0])])
        for k, (rem, ins, obj) in enumerate(trace.iterations, start=1):
            w.writerow([k, rem, "" if ins is None else ins, repr(obj)])
