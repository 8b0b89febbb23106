import io
import itertools
import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import linprog

from ccportfolio import models
from ccportfolio.lp import (UnsupportedModelError, lagrangian_bound, solve_binary_bb,
                            solve_lp)
from ccportfolio.models import OptimizationModel

from conftest import random_sf


def lin_model(c, A, senses, rhs, binary=False, lower=0.0, upper=1.0, quad=None):
    c = np.asarray(c, float)
    n = c.size
    A = np.atleast_2d(np.asarray(A, float)).reshape(len(rhs), n)
    b = np.broadcast_to(binary, n)
    return OptimizationModel("T", [f"v_{j}" for j in range(n)], b,
                             np.broadcast_to(lower, n), np.broadcast_to(upper, n),
                             sp.csr_matrix(A), senses, rhs,
                             [f"r{k}" for k in range(len(rhs))], c, quad)


def scipy_solve(m):
    A = m.A.toarray()
    ub_rows = [r for r, s in enumerate(m.senses) if s != "="]
    eq_rows = [r for r, s in enumerate(m.senses) if s == "="]
    sign = np.array([1.0 if m.senses[r] == "<=" else -1.0 for r in ub_rows])
    res = linprog(m.linear,
                  A_ub=A[ub_rows] * sign[:, None] if ub_rows else None,
                  b_ub=m.rhs[ub_rows] * sign if ub_rows else None,
                  A_eq=A[eq_rows] if eq_rows else None, b_eq=m.rhs[eq_rows] if eq_rows else None,
                  bounds=list(zip(m.lower, m.upper)), method="highs")
    return res


def test_single_variable():
    m = lin_model([1.0], [[1.0]], [">="], [0.3])
    sol = solve_lp(m)
    assert sol.status == "optimal" and sol.objective == pytest.approx(0.3)
    assert sol.x[0] == pytest.approx(0.3)


def test_fractional_knapsack_matches_greedy(rng):
    for _ in range(20):
        n = int(rng.integers(3, 30))
        e = rng.uniform(0, 1, n)
        K = float(rng.integers(1, n)) + 0.5 * rng.integers(0, 2)
        K = min(K, n)
        sol = solve_lp(lin_model(e, np.ones((1, n)), ["="], [K]))
        s = np.sort(e)
        greedy = s[: int(K)].sum() + (K - int(K)) * (s[int(K)] if int(K) < n else 0.0)
        assert sol.objective == pytest.approx(greedy, abs=1e-10)


def test_two_equality_lp_matches_vertex_enumeration(rng):
    n, K = 6, 3
    for _ in range(10):
        beta = rng.normal(1, 0.5, n)
        e = rng.uniform(0.01, 1, n)
        bmin, bmax = np.sort(beta)[:K].sum(), np.sort(beta)[-K:].sum()
        b = bmin + rng.uniform(0.1, 0.9) * (bmax - bmin)
        sol = solve_lp(lin_model(e, np.vstack([beta, np.ones(n)]), ["=", "="], [b, K]))
        # basic solutions: two free coordinates, the rest at a bound
        best = math.inf
        for i, j in itertools.combinations(range(n), 2):
            rest = [k for k in range(n) if k not in (i, j)]
            for bits in itertools.product((0.0, 1.0), repeat=n - 2):
                x = np.zeros(n)
                x[rest] = bits
                M = np.array([[beta[i], beta[j]], [1.0, 1.0]])
                rhs = np.array([b - beta @ x, K - x.sum()])
                if abs(np.linalg.det(M)) < 1e-12:
                    continue
                x[[i, j]] = np.linalg.solve(M, rhs)
                if np.all(x >= -1e-12) and np.all(x <= 1 + 1e-12):
                    best = min(best, e @ x)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(best, abs=1e-9)
        assert np.count_nonzero((sol.x > 1e-9) & (sol.x < 1 - 1e-9)) <= 2


def test_random_lps_match_highs(rng):
    checked = 0
    for _ in range(150):
        n = int(rng.integers(2, 12))
        m = int(rng.integers(1, 6))
        A = rng.normal(size=(m, n))
        x0 = rng.uniform(0, 1, n)
        senses = list(rng.choice(["<=", ">=", "="], m))
        rhs = A @ x0 + np.where(np.array(senses) == "<=", 0.1, np.where(np.array(senses) == ">=", -0.1, 0.0))
        if rng.random() < 0.2:
            rhs = rhs + rng.normal(0, 3, m)  # some of these become infeasible
        lo = rng.uniform(-1, 0, n)
        up = lo + rng.uniform(0.5, 3, n)
        model = lin_model(rng.normal(size=n), A, senses, rhs, lower=lo, upper=up)
        ours, ref = solve_lp(model), scipy_solve(model)
        if ref.status == 2:
            assert ours.status == "infeasible"
            continue
        assert ours.status == "optimal"
        assert ours.objective == pytest.approx(ref.fun, abs=1e-7 * max(1, abs(ref.fun)))
        assert model.is_feasible(ours.x, tol=1e-7)
        # weak duality audit on the final basis
        assert lagrangian_bound(model, ours.duals) <= ours.objective + 1e-7
        assert lagrangian_bound(model, ours.duals) == pytest.approx(ours.objective, abs=1e-6)
        checked += 1
    assert checked > 100


def test_infeasible_lp():
    m = lin_model([1.0, 1.0], [[1.0, 1.0]], [">="], [3.0])
    assert solve_lp(m).status == "infeasible"


def test_unsupported_models():
    q = sp.csr_matrix([[1.0]])
    with pytest.raises(UnsupportedModelError):
        solve_lp(lin_model([0.0], [[1.0]], ["<="], [1.0], quad=q))
    with pytest.raises(UnsupportedModelError):
        solve_lp(lin_model([1.0], [[1.0]], ["<="], [1.0], upper=math.inf))
    with pytest.raises(UnsupportedModelError):
        solve_lp(lin_model([1.0], [[1.0]], ["<="], [1.0]), relax_integrality=False)


def test_lagrangian_bound_rejects_wrong_sign():
    m = lin_model([1.0], [[1.0]], ["<="], [1.0])
    assert lagrangian_bound(m, [1.0]) == -math.inf


def test_degenerate_lp_terminates():
    # many ties in a highly degenerate assignment polytope
    n = 4
    A, rhs = [], []
    for i in range(n):
        row = np.zeros(n * n)
        row[i * n:(i + 1) * n] = 1
        A.append(row)
        col = np.zeros(n * n)
        col[i::n] = 1
        A.append(col)
        rhs += [1.0, 1.0]
    m = lin_model(np.zeros(n * n), np.array(A), ["="] * len(rhs), rhs)
    sol = solve_lp(m)
    assert sol.status == "optimal" and sol.objective == 0.0


# ---- branch and bound ---------------------------------------------------------------

def enumerate_binary(model):
    n = model.n_vars
    X = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    res = X @ model.A.T.toarray() - model.rhs
    ok = np.ones(len(X), dtype=bool)
    for r, s in enumerate(model.senses):
        if s == "<=":
            ok &= res[:, r] <= 1e-9
        elif s == ">=":
            ok &= res[:, r] >= -1e-9
        else:
            ok &= np.abs(res[:, r]) <= 1e-9
    if not ok.any():
        return math.inf
    return float((X[ok] @ model.linear).min())


def test_integral_root():
    m = lin_model([1.0, 2.0, 3.0], [[1.0, 1.0, 1.0]], ["="], [1.0], binary=True)
    sol = solve_binary_bb(m)
    assert sol.status == "optimal" and sol.nodes == 1 and sol.objective == 1.0


def test_infeasible_binary():
    m = lin_model([1.0], [[1.0], [1.0]], ["=", "="], [1.0, 0.0], binary=True)
    assert solve_binary_bb(m).status == "infeasible"


def test_random_binary_programs_match_enumeration():
    rng = np.random.default_rng(7)
    for trial in range(200):
        n = int(rng.integers(2, 16)) if trial % 10 == 0 else int(rng.integers(2, 11))
        m = int(rng.integers(1, 4))
        A = rng.integers(-3, 6, size=(m, n)).astype(float)
        senses = list(rng.choice(["<=", ">=", "="], m, p=[0.5, 0.3, 0.2]))
        x0 = rng.integers(0, 2, n).astype(float)
        rhs = A @ x0 + np.where(np.array(senses) == "<=", rng.integers(0, 3, m), 0)
        model = lin_model(rng.normal(size=n).round(3), A, senses, rhs, binary=True)
        sol = solve_binary_bb(model)
        ref = enumerate_binary(model)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(ref, abs=1e-9)
        assert model.is_feasible(sol.x)
        assert np.all(np.abs(sol.x - np.round(sol.x)) <= 1e-6)
        assert sol.bound <= sol.objective + 1e-12


def test_ew_la_matches_double_brute_force():
    rng = np.random.default_rng(31)
    sf = random_sf(rng, 12)
    K = 3
    m = models.build_ewccmvfm_la(sf, K, models.default_grids(sf, K, n_beta=40), mode="one-sided")
    best = math.inf
    for T in itertools.combinations(range(12), K):
        v = models.la_point(m, T)  # cheapest admissible y for this x
        best = min(best, m.objective(v))
    sol = solve_binary_bb(m)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(best, rel=1e-9)


def test_node_log_and_determinism():
    sf = random_sf(np.random.default_rng(3), 10)
    m = models.build_ewccmvfm_la(sf, 4, models.default_grids(sf, 4, n_beta=30))
    log = io.StringIO()
    a = solve_binary_bb(m, node_log=log)
    b = solve_binary_bb(m)
    lines = log.getvalue().splitlines()
    assert lines[0] == "node,depth,bound,incumbent,gap"
    assert len(lines) == a.nodes + 1
    assert a.objective == b.objective and np.array_equal(a.x, b.x) and a.nodes == b.nodes


def test_node_limit_reports_bound():
    sf = random_sf(np.random.default_rng(3), 14)
    m = models.build_ewccmvfm_la(sf, 5, models.default_grids(sf, 5, n_beta=60))
    full = solve_binary_bb(m)
    assert full.nodes > 3
    part = solve_binary_bb(m, node_limit=3)
    assert part.status in ("feasible-at-limit", "limit-no-incumbent")
    assert part.bound <= full.objective + 1e-12
    if part.x is not None:
        assert part.bound <= part.objective and part.gap >= 0
    else:
        assert math.isinf(part.gap)
    timed = solve_binary_bb(m, time_limit=0.0)
    assert timed.status != "optimal" or timed.nodes == 1
