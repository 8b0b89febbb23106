"""Planar geometry of the single-factor problem and its Monge structure.

Each asset maps to the point ``a_i = (beta_i sigma_f, eps_i)``. A ``K``-subset
maps to the sum of its points, and its equal-weight variance is
``(u^2 + v) / K^2`` at that sum ``(u, v)``. The continuous relaxation
optimises the same function over the convex hull of all ``K``-sums.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .exact import CapExceededError, DEFAULT_CAP, solve_relaxation_sf
from .factors import SingleFactorModel

__all__ = [
    "PointSet2D",
    "MongeReport",
    "FrontierReport",
    "build_A",
    "addition_set",
    "convex_hull",
    "verify_frontier",
    "monge_matrix",
    "check_inverse_monge",
    "naive_monge_check",
    "write_scatter_csv",
]


@dataclass(frozen=True)
class PointSet2D:
    points: np.ndarray  # shape (k, 2)
    labels: list


def build_A(instance: SingleFactorModel) -> PointSet2D:
    """Points ``(beta_i sigma_f, eps_i)`` in asset order."""
    pts = np.column_stack([instance.beta * instance.sigma_f, instance.sigma_eps2])
    return PointSet2D(pts, list(range(instance.n)))


def addition_set(A: PointSet2D, K: int, n_cap: int = DEFAULT_CAP) -> PointSet2D:
    """Sums of every ``K`` distinct points, labelled by the subset of labels."""
    n = len(A.labels)
    if not 1 <= K <= n:
        raise ValueError(f"K={K} must lie in [1, {n}]")
    count = math.comb(n, K)
    if count > n_cap:
        raise CapExceededError(f"addition set has {count} points, cap is {n_cap}")
    combos = np.array(list(itertools.combinations(range(n), K)), dtype=int).reshape(-1, K)
    pts = A.points[combos].sum(axis=1)
    labels = [tuple(A.labels[i] for i in row) for row in combos]
    return PointSet2D(pts, labels)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _orient(o, a, b) -> int:
    """Sign of the turn o -> a -> b, exact when the float result is marginal."""
    c = _cross(o, a, b)
    mag = (abs(a[0] - o[0]) + abs(a[1] - o[1])) * (abs(b[0] - o[0]) + abs(b[1] - o[1]))
    if abs(c) > 1e-12 * mag:
        return 1 if c > 0 else -1
    fo, fa, fb = ([Fraction(float(t)) for t in p] for p in (o, a, b))
    ce = _cross(fo, fa, fb)
    return (ce > 0) - (ce < 0)


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise hull vertices (monotone chain), collinear points dropped.

    Returns indices into ``points``, starting from the lowest-then-leftmost
    point in lexicographic ``(u, v)`` order.
    """
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    order = np.lexsort((P[:, 1], P[:, 0]))
    # drop exact duplicates, keeping the first occurrence
    uniq = [int(order[0])]
    for k in order[1:]:
        if not np.array_equal(P[k], P[uniq[-1]]):
            uniq.append(int(k))
    if len(uniq) <= 2:
        return np.array(uniq, dtype=int)

    def chain(seq):
        out = []
        for k in seq:
            while len(out) >= 2 and _orient(P[out[-2]], P[out[-1]], P[k]) <= 0:
                out.pop()
            out.append(k)
        return out

    lower = chain(uniq)
    upper = chain(uniq[::-1])
    hull = lower[:-1] + upper[:-1]
    return np.array(hull, dtype=int)


@dataclass(frozen=True)
class FrontierReport:
    K: int
    point: tuple  # relaxation optimum in (u, v) coordinates
    on_frontier: bool
    distance: float
    vertices: tuple  # supporting subsets, one or two
    coefficients: tuple  # convex weights of the supporting subsets
    differ_by_one: bool
    collinear: bool
    fractional_count: int
    relaxation_objective: float


def _segment_distance(p, a, b):
    d = b - a
    L = d @ d
    t = 0.0 if L == 0 else float(np.clip((p - a) @ d / L, 0.0, 1.0))
    return float(np.hypot(*(p - (a + t * d)))), t


def verify_frontier(instance: SingleFactorModel, K: int, n_cap: int = 2_000_000,
                    tol: float = 1e-7) -> FrontierReport:
    """Locate the relaxation optimum on the hull of all ``K``-subset points.

    The optimum should lie on the lower part of the hull boundary (where
    the outward normal points downwards) and be a convex combination of at
    most two hull vertices whose subsets differ by a single swap.
    """
    r = solve_relaxation_sf(instance, K)
    A = build_A(instance)
    AK = addition_set(A, K, n_cap)
    P = A.points.T @ r.x
    hull = convex_hull(AK.points)
    H = AK.points[hull]
    scale = max(1.0, float(np.abs(AK.points).max()))
    atol = tol * scale
    best = (math.inf, None, 0.0)
    m = len(hull)
    for k in range(m):
        a, b = H[k], H[(k + 1) % m] if m > 1 else H[k]
        dist, t = _segment_distance(P, a, b)
        if dist < best[0] - 1e-15:
            best = (dist, k, t)
    dist, k, t = best
    a_idx, b_idx = hull[k], hull[(k + 1) % m]
    edge = H[(k + 1) % m] - H[k]
    # counter-clockwise order: bottom edges run left to right
    lower = m == 1 or edge[0] > 0 or (t <= 1e-9 and _touches_lower(H, k)) or (
        t >= 1 - 1e-9 and _touches_lower(H, (k + 1) % m))
    on = dist <= atol and lower
    if t <= 1e-9 or a_idx == b_idx:
        verts, coefs = (AK.labels[a_idx],), (1.0,)
    elif t >= 1 - 1e-9:
        verts, coefs = (AK.labels[b_idx],), (1.0,)
    else:
        verts, coefs = (AK.labels[a_idx], AK.labels[b_idx]), (1.0 - t, t)
    differ = len(verts) == 1 or len(set(verts[0]) ^ set(verts[1])) == 2
    collinear = False
    if len(verts) == 2:
        a, b = H[k], H[(k + 1) % m]
        d = np.array([_segment_distance(q, a, b)[0] for q in AK.points])
        collinear = int(np.count_nonzero(d <= atol)) > 2
    return FrontierReport(K, (float(P[0]), float(P[1])), bool(on), dist, verts, coefs,
                          bool(differ), collinear, r.fractional_count, r.objective)


def _touches_lower(H, k):
    m = len(H)
    prev_edge = H[k] - H[(k - 1) % m]
    next_edge = H[(k + 1) % m] - H[k]
    return prev_edge[0] > 0 or next_edge[0] > 0


def monge_matrix(instance: SingleFactorModel, K: int):
    """``M_ij = (eps_i + eps_j)/(2K) + sigma_f2 beta_i beta_j`` with assets sorted by beta.

    Returns
    -------
    (ndarray, ndarray)
        The matrix and the permutation (ascending beta, stable) applied.
    """
    perm = np.argsort(instance.beta, kind="stable")
    b = instance.beta[perm]
    e = instance.sigma_eps2[perm]
    M = (e[:, None] + e[None, :]) / (2.0 * K) + instance.sigma_f2 * np.outer(b, b)
    return M, perm


@dataclass(frozen=True)
class MongeReport:
    n: int
    is_inverse_monge: bool
    worst_violation: float  # max of M_il + M_jk - M_ik - M_jl; positive is a violation
    witness: tuple | None


def check_inverse_monge(M, tol: float = 0.0) -> MongeReport:
    """Adjacent 2x2 test of ``M_ik + M_jl >= M_il + M_jk`` for ``i<j, k<l``.

    Every quadruple inequality is a sum of adjacent ones, so the adjacent
    check is equivalent and needs only ``O(n^2)`` work.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    n = M.shape[0]
    if n < 2:
        return MongeReport(n, True, 0.0, None)
    viol = M[:-1, 1:] + M[1:, :-1] - M[:-1, :-1] - M[1:, 1:]
    i, k = np.unravel_index(int(np.argmax(viol)), viol.shape)
    worst = float(viol[i, k])
    witness = (int(i), int(i) + 1, int(k), int(k) + 1) if worst > tol else None
    return MongeReport(n, worst <= tol, worst, witness)


def naive_monge_check(M, tol: float = 0.0) -> MongeReport:
    """Definitional scan over every ``i<j, k<l``; ``O(n^4)``, for testing."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    worst, witness = -math.inf, None
    upper = np.triu(np.ones((n, n), dtype=bool), 1)  # k < l
    for i in range(n):
        for j in range(i + 1, n):
            # v[k, l] = M_il + M_jk - M_ik - M_jl
            v = M[i][None, :] + M[j][:, None] - M[i][:, None] - M[j][None, :]
            v = np.where(upper, v, -math.inf)
            k, l = np.unravel_index(int(np.argmax(v)), v.shape)
            if v[k, l] > worst:
                worst, witness = float(v[k, l]), (i, j, int(k), int(l))
    if n < 2:
        worst = 0.0
    return MongeReport(n, worst <= tol, worst, witness if worst > tol else None)


def write_scatter_csv(instance: SingleFactorModel, path) -> None:
    A = build_A(instance)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["asset", "beta_sigma_f", "sigma_eps2"])
        for lab, (u, v) in zip(A.labels, A.points):
            w.writerow([lab, repr(float(u)), repr(float(v))])
