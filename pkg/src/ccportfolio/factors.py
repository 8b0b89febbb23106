"""Single-index and principal-component factor models."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import DataError, ReturnTable

log = logging.getLogger(__name__)

__all__ = [
    "SingleFactorModel",
    "MultiFactorModel",
    "fit_single_index",
    "fit_pca_factors",
    "implied_covariance",
    "as_multi",
    "write_instance_csv",
    "read_instance_csv",
    "write_factor_csv",
]


def _clip_variances(v, what="residual variance"):
    neg = v < 0
    if neg.any():
        log.warning("clipping %d negative %s values (min %.3e)", neg.sum(), what, v.min())
        v = np.where(neg, 0.0, v)
    return v


@dataclass(frozen=True, eq=False)
class SingleFactorModel:
    """``r_i = alpha_i + beta_i f + eps_i`` with ``var(f) = sigma_f2``."""

    beta: np.ndarray
    sigma_eps2: np.ndarray
    sigma_f2: float = 1.0
    alpha: np.ndarray = None

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        eps = np.asarray(self.sigma_eps2, dtype=float).ravel()
        if beta.shape != eps.shape:
            raise ValueError("beta and sigma_eps2 must have the same length")
        if np.any(eps < 0):
            raise ValueError("residual variances must be non-negative")
        if not self.sigma_f2 > 0:
            raise ValueError("factor variance must be positive")
        alpha = np.zeros_like(beta) if self.alpha is None else np.asarray(self.alpha, float).ravel()
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma_eps2", eps)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma_f2", float(self.sigma_f2))

    @property
    def n(self) -> int:
        return self.beta.size

    @property
    def sigma_f(self) -> float:
        return float(np.sqrt(self.sigma_f2))

    def subset(self, idx) -> "SingleFactorModel":
        idx = np.asarray(idx)
        return SingleFactorModel(self.beta[idx], self.sigma_eps2[idx], self.sigma_f2, self.alpha[idx])

    def scaled(self, lam: float) -> "SingleFactorModel":
        """Multiply every variance (factor and residual) by ``lam``."""
        return SingleFactorModel(self.beta, self.sigma_eps2 * lam, self.sigma_f2 * lam, self.alpha)


@dataclass(frozen=True, eq=False)
class MultiFactorModel:
    """``r_i = alpha_i + B[:, i]^T F + eps_i`` with ``cov(F) = Sigma_F``.

    ``B`` is ``m x n``: one row of loadings per factor.
    """

    B: np.ndarray
    Sigma_F: np.ndarray
    sigma_eps2: np.ndarray
    alpha: np.ndarray = None
    uncorrelated_flag: bool = field(default=None)

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        S = np.atleast_2d(np.asarray(self.Sigma_F, dtype=float))
        eps = np.asarray(self.sigma_eps2, dtype=float).ravel()
        if S.shape != (B.shape[0], B.shape[0]):
            raise ValueError("Sigma_F must be m x m for an m x n loading matrix")
        if eps.size != B.shape[1]:
            raise ValueError("sigma_eps2 must have one entry per asset")
        if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
            raise ValueError("Sigma_F must be symmetric")
        if np.any(eps < 0):
            raise ValueError("residual variances must be non-negative")
        alpha = np.zeros(B.shape[1]) if self.alpha is None else np.asarray(self.alpha, float).ravel()
        flag = self.uncorrelated_flag
        if flag is None:
            off = S - np.diag(np.diag(S))
            scale = np.abs(np.diag(S)).max() if S.size else 0.0
            flag = bool(np.all(np.abs(off) <= 1e-9 * scale))
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "Sigma_F", S)
        object.__setattr__(self, "sigma_eps2", eps)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "uncorrelated_flag", bool(flag))

    @property
    def n(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.B.shape[0]

    def subset(self, idx) -> "MultiFactorModel":
        idx = np.asarray(idx)
        return MultiFactorModel(self.B[:, idx], self.Sigma_F, self.sigma_eps2[idx],
                                self.alpha[idx], self.uncorrelated_flag)


def as_multi(model) -> MultiFactorModel:
    """View a single-factor model as a one-factor :class:`MultiFactorModel`."""
    if isinstance(model, MultiFactorModel):
        return model
    return MultiFactorModel(model.beta[None, :], [[model.sigma_f2]], model.sigma_eps2,
                            model.alpha, True)


def fit_single_index(returns: ReturnTable) -> SingleFactorModel:
    """Time-series regression of every asset on the demeaned index return.

    Moments use the ``1/(T-1)`` convention. ``beta_i * sigma_f2`` equals the
    sample covariance of asset ``i`` with the factor.
    """
    T = returns.n_periods_returns
    if T < 3:
        raise DataError("single-index fit needs at least three return periods")
    f = returns.index_returns - returns.index_returns.mean()
    sigma_f2 = f @ f / (T - 1)
    if not sigma_f2 > 1e-300:
        raise DataError("degenerate factor: index returns are constant")
    R = returns.asset_returns
    alpha = R.mean(axis=0)
    Rc = R - alpha
    beta = (f @ Rc) / (T - 1) / sigma_f2
    var_r = (Rc * Rc).sum(axis=0) / (T - 1)
    eps = _clip_variances(var_r - beta**2 * sigma_f2)
    return SingleFactorModel(beta, eps, sigma_f2, alpha)


def single_index_factor(returns: ReturnTable) -> np.ndarray:
    """The demeaned index series used as the single factor."""
    return returns.index_returns - returns.index_returns.mean()


def fit_pca_factors(returns: ReturnTable, m: int = 4, return_scores: bool = False):
    """Statistical factor model from the first ``m`` principal components.

    The components come from the eigen-decomposition of the ``T x T`` Gram
    matrix of centred returns, which is cheap because ``T`` is much smaller
    than the number of assets. Each loading vector is flipped so that its
    largest-magnitude entry is positive.

    Parameters
    ----------
    returns : ReturnTable
    m : int
        Number of factors, at most ``min(n_assets, T - 1)``.
    return_scores : bool
        Also return the ``T x m`` matrix of factor scores.
    """
    R = returns.asset_returns
    T, n = R.shape
    if not 1 <= m <= min(n, T - 1):
        raise ValueError(f"m={m} outside [1, {min(n, T - 1)}]")
    alpha = R.mean(axis=0)
    X = R - alpha
    gram = X @ X.T
    lam, U = np.linalg.eigh(gram)
    order = np.argsort(lam)[::-1][:m]
    lam, U = lam[order], U[:, order]
    if np.any(lam <= 0):
        raise ValueError("requested more components than the return matrix rank")
    loadings = (X.T @ U) / np.sqrt(lam)  # n x m, orthonormal columns
    flip = np.sign(loadings[np.abs(loadings).argmax(axis=0), np.arange(m)])
    loadings *= flip
    scores = U * np.sqrt(lam) * flip  # T x m
    var_f = lam / (T - 1)
    var_r = (X * X).sum(axis=0) / (T - 1)
    eps = _clip_variances(var_r - (loadings**2 * var_f).sum(axis=1))
    model = MultiFactorModel(loadings.T.copy(), np.diag(var_f), eps, alpha, True)
    if return_scores:
        return model, scores
    return model


def implied_covariance(model) -> np.ndarray:
    """``B^T Sigma_F B + diag(sigma_eps2)``."""
    mf = as_multi(model)
    cov = mf.B.T @ mf.Sigma_F @ mf.B
    cov = 0.5 * (cov + cov.T)
    cov[np.diag_indices_from(cov)] += mf.sigma_eps2
    return cov


def write_instance_csv(model, path) -> None:
    """Write a single-factor instance as ``asset,beta,alpha,sigma_eps2``.

    The factor variance goes into a leading ``# sigma_f2=`` comment line.
    """
    with open(path, "w", newline="") as fh:
        fh.write(f"# sigma_f2={model.sigma_f2!r}\n")
        w = csv.writer(fh)
        w.writerow(["asset", "beta", "alpha", "sigma_eps2"])
        for i in range(model.n):
            w.writerow([i, repr(float(model.beta[i])), repr(float(model.alpha[i])),
                        repr(float(model.sigma_eps2[i]))])


def read_instance_csv(path) -> SingleFactorModel:
    sigma_f2 = 1.0
    rows = []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            if key.strip() == "sigma_f2":
                sigma_f2 = float(val)
        elif line.strip():
            body.append(line)
    for rec in csv.DictReader(body):
        rows.append((int(rec["asset"]), float(rec["beta"]), float(rec["alpha"]),
                     float(rec["sigma_eps2"])))
    rows.sort()
    arr = np.array([r[1:] for r in rows], dtype=float).reshape(-1, 3)
    return SingleFactorModel(arr[:, 0], arr[:, 2], sigma_f2, arr[:, 1])


def write_factor_csv(model: MultiFactorModel, directory, stem: str = "factor") -> list[Path]:
    """One ``asset,beta,alpha,sigma_eps2`` file per factor plus the factor covariance."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for l in range(model.m):
        p = directory / f"{stem}{l + 1}.csv"
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["asset", "beta", "alpha", "sigma_eps2"])
            for i in range(model.n):
                w.writerow([i, repr(float(model.B[l, i])), repr(float(model.alpha[i])),
                            repr(float(model.sigma_eps2[i]))])
        paths.append(p)
    p = directory / f"{stem}_covariance.csv"
    np.savetxt(p, model.Sigma_F, delimiter=",")
    paths.append(p)
    return paths
