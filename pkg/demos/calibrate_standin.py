"""Fit the indtrack5 stand-in generator to published minimum-variance figures.

Without the OR-Library file we still want a price history whose single-index
estimates behave like the real data. The published long-only minimum-variance
portfolio of indtrack5 (cardinality 20, not binding) holds 16 assets at a
risk of 0.01730. This grid search picks the generator parameters whose
estimates come closest in both respects, on a log scale.

Run with ``python demos/calibrate_standin.py``.
"""

import itertools

import numpy as np

from ccportfolio import compute_returns, fit_single_index, implied_covariance, synthetic_indtrack
from ccportfolio.exact import qp_support

TARGET_RISK, TARGET_SIZE = 0.0173, 16

grid = itertools.product(
    [0.02, 0.025, 0.03],          # market volatility
    [0.8, 1.0, 1.2],              # beta mean
    [0.2, 0.3, 0.45],             # beta spread
    [0.005, 0.01, 0.015],         # idiosyncratic vol, low end
    [0.03, 0.045],                # idiosyncratic vol, high end
)

results = []
for mv, bm, bsd, lo, hi in grid:
    prices = synthetic_indtrack(225, 291, 0, market_vol=mv, beta_mean=bm, beta_sd=bsd,
                                idio_vol=(lo, hi))
    model = fit_single_index(compute_returns(prices))
    cov = implied_covariance(model)
    w = qp_support(cov, range(model.n))
    size = int((w > 1e-9).sum())
    risk = float(np.sqrt(w @ cov @ w))
    score = abs(np.log(risk / TARGET_RISK)) + abs(np.log(size / TARGET_SIZE))
    results.append((score, (mv, bm, bsd, (lo, hi)), size, risk))

results.sort(key=lambda r: r[0])
print("score   market  beta_mean  beta_sd  idio_vol         size  risk")
for score, (mv, bm, bsd, iv), size, risk in results[:5]:
    print(f"{score:.3f}   {mv:<6}  {bm:<9}  {bsd:<7}  {str(iv):<15}  {size:<4}  {risk:.5f}")
