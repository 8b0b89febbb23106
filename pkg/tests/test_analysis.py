import csv
import math

import numpy as np
import pytest

from ccportfolio import data
from ccportfolio.analysis import (PointSet2D, addition_set, build_A, check_inverse_monge,
                                  convex_hull, monge_matrix, naive_monge_check,
                                  verify_frontier, write_scatter_csv)
from ccportfolio.exact import CapExceededError, ew_objective
from ccportfolio.factors import SingleFactorModel

from conftest import random_sf


def test_build_A():
    A = build_A(SingleFactorModel([1.0], [3.0], 4.0))
    assert A.points.tolist() == [[2.0, 3.0]] and A.labels == [0]
    inst = SingleFactorModel([0.5, -1.0], [0.1, 0.2], 1.0)
    B = build_A(SingleFactorModel(inst.beta, inst.sigma_eps2, 9.0))
    np.testing.assert_allclose(B.points[:, 0], 3 * build_A(inst).points[:, 0])
    np.testing.assert_array_equal(B.points[:, 1], build_A(inst).points[:, 1])


def test_adhoc_A_set_is_staircase(rng):
    pts = build_A(data.build_adhoc(random_sf(rng, 50))).points
    assert np.all(np.diff(pts[:, 0]) >= 0) and np.all(np.diff(pts[:, 1]) <= 0)


def test_addition_set_examples(rng):
    A = PointSet2D(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [0, 1, 2])
    AK = addition_set(A, 2)
    assert sorted(map(tuple, AK.points.tolist())) == [(0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
    assert AK.labels == [(0, 1), (0, 2), (1, 2)]
    full = addition_set(A, 3)
    assert full.points.tolist() == [[1.0, 1.0]]
    B = build_A(random_sf(rng, 11))
    assert len(addition_set(B, 4).labels) == math.comb(11, 4)
    with pytest.raises(CapExceededError):
        addition_set(B, 5, n_cap=100)


def test_addition_set_translation(rng):
    A = build_A(random_sf(rng, 8))
    shift = np.array([0.3, -1.2])
    moved = PointSet2D(A.points + shift, A.labels)
    np.testing.assert_allclose(addition_set(moved, 3).points,
                               addition_set(A, 3).points + 3 * shift, atol=1e-12)


def test_ew_objective_from_sums(rng):
    inst = random_sf(rng, 9)
    AK = addition_set(build_A(inst), 3)
    for (u, v), T in zip(AK.points, AK.labels):
        assert (u * u + v) / 9 == pytest.approx(ew_objective(inst, T), rel=1e-12)


# ---- hull ----------------------------------------------------------------------------------

def test_hull_small_cases():
    assert sorted(convex_hull([[0, 0], [1, 0], [0, 1]]).tolist()) == [0, 1, 2]
    sq = [[0, 0], [2, 0], [2, 2], [0, 2], [1, 1]]
    assert convex_hull(sq).tolist() == [0, 1, 2, 3]
    assert convex_hull([[0, 0], [1, 1], [2, 2], [0, 2]]).tolist() == [0, 2, 3]
    assert convex_hull([[1, 1], [1, 1]]).tolist() == [0]
    assert convex_hull([[5, 5]]).tolist() == [0]


def test_hull_is_counter_clockwise(rng):
    P = rng.normal(size=(200, 2))
    h = P[convex_hull(P)]
    area2 = np.sum(h[:, 0] * np.roll(h[:, 1], -1) - np.roll(h[:, 0], -1) * h[:, 1])
    assert area2 > 0


def test_hull_matches_scipy(rng):
    from scipy.spatial import ConvexHull
    for P in (rng.normal(size=(10_000, 2)), rng.integers(0, 30, size=(10_000, 2)).astype(float)):
        ours = set(convex_hull(P).tolist())
        ref = ConvexHull(P)
        ref_pts = {tuple(P[i]) for i in ref.vertices}
        assert {tuple(P[i]) for i in ours} == ref_pts
        assert len(ours) == len(ref_pts)


# ---- frontier --------------------------------------------------------------------------------

def test_integral_relaxation_single_vertex():
    inst = SingleFactorModel([0.1, 0.5, 0.9, 1.3], [0.0, 0.0, 0.0, 0.0], 1.0)
    rep = verify_frontier(inst, 2)
    assert rep.on_frontier and rep.fractional_count == 0
    assert rep.vertices == ((0, 1),) and rep.coefficients == (1.0,)


def test_frontier_on_random_instances():
    for seed in range(100):
        rep = verify_frontier(random_sf(np.random.default_rng(seed), 12), 4)
        assert rep.on_frontier, seed
        assert rep.differ_by_one and len(rep.vertices) <= 2
        assert rep.fractional_count <= 2


def test_two_fractional_variables_differ_by_one_asset():
    rep = verify_frontier(random_sf(np.random.default_rng(1002), 12), 4)
    assert rep.fractional_count == 2 and len(rep.vertices) == 2
    assert len(set(rep.vertices[0]) ^ set(rep.vertices[1])) == 2
    assert sum(rep.coefficients) == pytest.approx(1.0) and min(rep.coefficients) > 0


# ---- Monge -------------------------------------------------------------------------------------

def test_product_matrix_signs():
    idx = np.arange(1, 8, dtype=float)
    # M_ik + M_jl - M_il - M_jk = (j - i)(l - k) > 0 for M = i*j
    assert check_inverse_monge(np.outer(idx, idx)).is_inverse_monge
    rep = check_inverse_monge(-np.outer(idx, idx))
    assert not rep.is_inverse_monge and rep.worst_violation == pytest.approx(1.0)
    i, j, k, l = rep.witness
    M = -np.outer(idx, idx)
    assert M[i, l] + M[j, k] - M[i, k] - M[j, l] == pytest.approx(rep.worst_violation)


def test_monge_trivial_cases(rng):
    assert check_inverse_monge(rng.normal(size=(2, 2)) * 0 + 1).is_inverse_monge
    assert check_inverse_monge(np.ones((1, 1))).is_inverse_monge
    inst = SingleFactorModel([0.8] * 6, rng.uniform(0, 1, 6), 1.5)
    M, _ = monge_matrix(inst, 3)
    assert abs(check_inverse_monge(M).worst_violation) <= 1e-15
    with pytest.raises(ValueError):
        check_inverse_monge(np.ones((2, 3)))


def test_adjacent_check_agrees_with_naive(rng):
    for _ in range(50):
        M = rng.normal(size=(12, 12))
        if rng.random() < 0.5:
            b = np.sort(rng.normal(size=12))
            M = np.outer(b, b) + 0.01 * rng.normal(size=(12, 12)) * (rng.random() < 0.5)
        a, n = check_inverse_monge(M), naive_monge_check(M)
        assert a.is_inverse_monge == n.is_inverse_monge
        # every quadruple is a sum of adjacent ones, so the naive worst is never smaller
        assert n.worst_violation >= a.worst_violation - 1e-12


def test_factor_matrix_is_inverse_monge(rng):
    for _ in range(20):
        inst = random_sf(rng, 40)
        M, perm = monge_matrix(inst, 5)
        assert np.all(np.diff(inst.beta[perm]) >= 0)
        np.testing.assert_allclose(M, M.T)
        assert check_inverse_monge(M, tol=1e-10 * np.abs(M).max()).is_inverse_monge


def test_monge_subset_identity(rng):
    inst = random_sf(rng, 15)
    K = 5
    M, perm = monge_matrix(inst, K)
    for _ in range(30):
        T = np.sort(rng.choice(15, K, replace=False))
        assets = perm[T]
        total = M[np.ix_(T, T)].sum()
        expect = K * inst.sigma_eps2[assets].sum() / K + inst.sigma_f2 * inst.beta[assets].sum() ** 2
        assert total == pytest.approx(expect, rel=1e-12)
        assert total == pytest.approx(K**2 * ew_objective(inst, assets), rel=1e-12)


def test_scatter_csv(tmp_path):
    inst = SingleFactorModel([1.0, 2.0], [0.5, 0.25], 4.0)
    p = tmp_path / "s.csv"
    write_scatter_csv(inst, p)
    rows = list(csv.reader(open(p)))
    assert rows == [["asset", "beta_sigma_f", "sigma_eps2"], ["0", "2.0", "0.5"], ["1", "4.0", "0.25"]]
