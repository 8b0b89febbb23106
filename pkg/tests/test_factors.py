import logging

import numpy as np
import pytest

from ccportfolio import data, factors
from ccportfolio.data import DataError, ReturnTable


def _returns(rng, T=80, n=6):
    f = rng.normal(0, 0.03, T)
    beta = rng.normal(1, 0.3, n)
    R = np.outer(f, beta) + rng.normal(0, 0.02, (T, n)) + 0.001
    return ReturnTable(f + 0.002, R)


def test_single_index_matches_least_squares(rng):
    rets = _returns(rng)
    fm = factors.fit_single_index(rets)
    X = np.column_stack([np.ones(rets.n_periods_returns), rets.index_returns])
    coef, *_ = np.linalg.lstsq(X, rets.asset_returns, rcond=None)
    np.testing.assert_allclose(fm.beta, coef[1], rtol=1e-10)
    np.testing.assert_allclose(fm.alpha, rets.asset_returns.mean(axis=0))
    assert fm.sigma_f2 == pytest.approx(np.var(rets.index_returns, ddof=1))
    resid = rets.asset_returns - X @ coef
    # residual variance with the 1/(T-1) convention
    np.testing.assert_allclose(fm.sigma_eps2, (resid**2).sum(axis=0) / (rets.n_periods_returns - 1),
                               rtol=1e-9)


def test_single_index_beta_times_var_is_cov(rng):
    rets = _returns(rng)
    fm = factors.fit_single_index(rets)
    cov = np.cov(np.column_stack([rets.index_returns, rets.asset_returns]), rowvar=False)
    np.testing.assert_allclose(fm.beta * fm.sigma_f2, cov[0, 1:], rtol=1e-10)


def test_perfect_fit_clips_to_zero(caplog):
    f = np.array([0.01, -0.02, 0.03, 0.0, -0.01])
    rets = ReturnTable(f, np.column_stack([2 * f, -f]))
    with caplog.at_level(logging.WARNING):
        fm = factors.fit_single_index(rets)
    np.testing.assert_allclose(fm.beta, [2.0, -1.0])
    assert np.all(fm.sigma_eps2 >= 0) and np.all(fm.sigma_eps2 < 1e-15)


def test_constant_index_rejected():
    rets = ReturnTable(np.full(5, 0.01), np.random.default_rng(0).normal(size=(5, 2)))
    with pytest.raises(DataError):
        factors.fit_single_index(rets)


def test_pca_matches_covariance_eigendecomposition(rng):
    rets = _returns(rng, T=60, n=9)
    fm, scores = factors.fit_pca_factors(rets, 3, return_scores=True)
    S = np.cov(rets.asset_returns, rowvar=False)
    lam, V = np.linalg.eigh(S)
    lam, V = lam[::-1][:3], V[:, ::-1][:, :3]
    np.testing.assert_allclose(np.diag(fm.Sigma_F), lam, rtol=1e-10)
    for l in range(3):
        v = V[:, l] * np.sign(V[np.argmax(np.abs(V[:, l])), l])
        np.testing.assert_allclose(fm.B[l], v, atol=1e-10)
        assert fm.B[l, np.argmax(np.abs(fm.B[l]))] > 0
    np.testing.assert_allclose(fm.B @ fm.B.T, np.eye(3), atol=1e-12)
    assert fm.uncorrelated_flag
    np.testing.assert_allclose(np.var(scores, axis=0, ddof=1), lam, rtol=1e-10)
    # full-rank PCA reproduces the sample covariance exactly
    full = factors.fit_pca_factors(rets, 9)
    np.testing.assert_allclose(factors.implied_covariance(full), S, atol=1e-14)


def test_pca_rejects_too_many_factors(rng):
    rets = _returns(rng, T=10, n=4)
    with pytest.raises(ValueError):
        factors.fit_pca_factors(rets, 5)
    with pytest.raises(ValueError):
        factors.fit_pca_factors(rets, 0)


def test_implied_covariance_single_factor():
    sf = factors.SingleFactorModel([1.0, 2.0], [0.5, 0.25], 2.0)
    np.testing.assert_allclose(factors.implied_covariance(sf), [[2.5, 4.0], [4.0, 8.25]])


def test_model_validation():
    with pytest.raises(ValueError):
        factors.SingleFactorModel([1.0], [-0.1])
    with pytest.raises(ValueError):
        factors.SingleFactorModel([1.0, 2.0], [0.1])
    with pytest.raises(ValueError):
        factors.MultiFactorModel(np.ones((2, 3)), [[1.0, 0.5], [0.4, 1.0]], np.ones(3))
    mf = factors.MultiFactorModel(np.ones((2, 3)), [[1.0, 0.5], [0.5, 1.0]], np.ones(3))
    assert not mf.uncorrelated_flag and mf.subset([0, 2]).n == 2


def test_instance_csv_round_trip(tmp_path, rng):
    sf = factors.SingleFactorModel(rng.normal(size=7), rng.uniform(size=7), 0.37,
                                   rng.normal(size=7))
    p = tmp_path / "inst.csv"
    factors.write_instance_csv(sf, p)
    back = factors.read_instance_csv(p)
    np.testing.assert_array_equal(back.beta, sf.beta)
    np.testing.assert_array_equal(back.sigma_eps2, sf.sigma_eps2)
    np.testing.assert_array_equal(back.alpha, sf.alpha)
    assert back.sigma_f2 == sf.sigma_f2


def test_factor_csv_export(tmp_path, data_dir):
    rets = data.compute_returns(data.read_indtrack(data_dir / "mini_indtrack.txt"))
    fm = factors.fit_pca_factors(rets, 2)
    paths = factors.write_factor_csv(fm, tmp_path)
    assert [p.name for p in paths] == ["factor1.csv", "factor2.csv", "factor_covariance.csv"]
    np.testing.assert_allclose(np.loadtxt(paths[-1], delimiter=","), fm.Sigma_F)
