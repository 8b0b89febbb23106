"""Index-tracking price data: parsing, returns and derived instances.

OR-Library ``indtrack*.txt`` files are a flat stream of whitespace separated
numbers. The first token is the number of assets ``N``; it is followed by one
block of ``N + 1`` prices per week, index price first.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "PriceTable",
    "ReturnTable",
    "parse_indtrack",
    "read_indtrack",
    "format_indtrack",
    "write_indtrack",
    "compute_returns",
    "concat_instances",
    "build_adhoc",
    "synthetic_indtrack",
    "find_dataset",
    "load_dataset",
    "STANDINS",
]


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True, eq=False)
class PriceTable:
    index_prices: np.ndarray
    asset_prices: np.ndarray
    source_name: str = ""

    def __post_init__(self):
        idx = np.asarray(self.index_prices, dtype=float)
        assets = np.atleast_2d(np.asarray(self.asset_prices, dtype=float))
        if assets.shape[0] != idx.shape[0]:
            raise DataError("index and asset price tables have different lengths")
        object.__setattr__(self, "index_prices", idx)
        object.__setattr__(self, "asset_prices", assets)

    @property
    def n_assets(self) -> int:
        return self.asset_prices.shape[1]

    @property
    def n_periods(self) -> int:
        return self.asset_prices.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PriceTable):
            return NotImplemented
        return (
            np.array_equal(self.index_prices, other.index_prices)
            and np.array_equal(self.asset_prices, other.asset_prices)
        )


@dataclass(frozen=True, eq=False)
class ReturnTable:
    index_returns: np.ndarray
    asset_returns: np.ndarray
    scheme: str = "simple"
    source_name: str = ""

    @property
    def n_assets(self) -> int:
        return self.asset_returns.shape[1]

    @property
    def n_periods_returns(self) -> int:
        return self.asset_returns.shape[0]

    @property
    def mean_returns(self) -> np.ndarray:
        return self.asset_returns.mean(axis=0)


def parse_indtrack(text, source_name: str = "") -> PriceTable:
    """Parse an OR-Library index tracking file.

    Parameters
    ----------
    text : str or file-like
        The raw file contents. Any run of whitespace separates tokens.
    source_name : str
        Label stored on the returned table.

    Raises
    ------
    DataError
        On a non-numeric token, a token count that does not split into
        ``N + 1`` prices per period, or a non-positive price.
    """
    if not isinstance(text, str):
        text = text.read()
    tokens = text.split()
    if not tokens:
        raise DataError("empty index tracking file")
    values = np.empty(len(tokens))
    for pos, tok in enumerate(tokens):
        try:
            values[pos] = float(tok)
        except ValueError:
            raise DataError(f"non-numeric token {tok!r} at position {pos}") from None
    n = values[0]
    if n != int(n) or n < 1:
        raise DataError(f"first token must be a positive asset count, got {tokens[0]!r}")
    n = int(n)
    rest = values[1:]
    if rest.size == 0 or rest.size % (n + 1):
        raise DataError(
            f"format error: N={n} needs a multiple of {n + 1} price tokens, "
            f"found {rest.size}"
        )
    table = rest.reshape(-1, n + 1)
    bad = np.argwhere(~(table > 0))
    if bad.size:
        row, col = bad[0]
        raise DataError(
            f"non-positive price {table[row, col]!r} at period {row}, column {col}"
        )
    return PriceTable(table[:, 0].copy(), table[:, 1:].copy(), source_name)


def read_indtrack(path) -> PriceTable:
    path = Path(path)
    return parse_indtrack(path.read_text(), source_name=path.stem)


def format_indtrack(prices: PriceTable) -> str:
    # repr() round-trips floats exactly
    out = io.StringIO()
    out.write(f"{prices.n_assets}\n")
    rows = np.column_stack([prices.index_prices, prices.asset_prices])
    for row in rows:
        out.write(" ".join(repr(float(v)) for v in row))
        out.write("\n")
    return out.getvalue()


def write_indtrack(prices: PriceTable, path) -> None:
    Path(path).write_text(format_indtrack(prices))


def compute_returns(prices: PriceTable, scheme: str = "simple") -> ReturnTable:
    """Per-period returns of the index and of every asset.

    ``simple`` gives ``p_t / p_{t-1} - 1`` and ``log`` gives ``ln(p_t / p_{t-1})``.
    """
    if prices.n_periods < 2:
        raise DataError("at least two price periods are needed to compute returns")
    p = np.column_stack([prices.index_prices, prices.asset_prices])
    if scheme == "simple":
        r = (p[1:] - p[:-1]) / p[:-1]
    elif scheme == "log":
        r = np.log(p[1:] / p[:-1])
    else:
        raise ValueError(f"unknown return scheme {scheme!r}")
    return ReturnTable(r[:, 0].copy(), r[:, 1:].copy(), scheme, prices.source_name)


def concat_instances(instances):
    """Stack several single-factor instances into one.

    Each instance is first expressed in A-set coordinates (beta scaled by
    its own factor volatility, factor variance 1) since the merged assets
    share no common index.
    """
    from .factors import SingleFactorModel

    instances = list(instances)
    if not instances:
        raise ValueError("concat_instances needs at least one instance")
    if len(instances) == 1:
        return instances[0]
    betas, alphas, eps = [], [], []
    for inst in instances:
        betas.append(inst.beta * np.sqrt(inst.sigma_f2))
        alphas.append(inst.alpha)
        eps.append(inst.sigma_eps2)
    return SingleFactorModel(
        beta=np.concatenate(betas),
        sigma_eps2=np.concatenate(eps),
        sigma_f2=1.0,
        alpha=np.concatenate(alphas),
    )


def build_adhoc(instance):
    """Pair ascending betas with descending residual variances.

    Every asset of the result is Pareto non-dominated in the
    (systematic, non-systematic) risk plane.
    """
    from .factors import SingleFactorModel

    if instance.n == 0:
        raise ValueError("empty instance")
    order = np.argsort(instance.beta, kind="stable")
    return SingleFactorModel(
        beta=instance.beta[order],
        sigma_eps2=np.sort(instance.sigma_eps2)[::-1].copy(),
        sigma_f2=instance.sigma_f2,
        alpha=instance.alpha[order],
    )


def synthetic_indtrack(n_assets: int = 225, n_periods: int = 291, seed: int = 0,
                       name: str = "synthetic", market_vol: float = 0.03,
                       beta_mean: float = 0.9, beta_sd: float = 0.35,
                       idio_vol: tuple = (0.015, 0.07)) -> PriceTable:
    """Weekly prices drawn from a one-factor market model.

    Defaults are in the range of weekly equity data: market volatility
    around 3%, betas spread around 1, idiosyncratic volatility 1.5%-7%.
    Used as a stand-in when the OR-Library files are not available.
    """
    rng = np.random.default_rng(seed)
    market = rng.normal(0.0015, market_vol, size=n_periods - 1)
    beta = np.clip(rng.normal(beta_mean, beta_sd, size=n_assets), -0.2, None)
    vol = rng.uniform(idio_vol[0], idio_vol[1], size=n_assets)
    drift = rng.normal(0.0005, 0.001, size=n_assets)
    noise = rng.normal(size=(n_periods - 1, n_assets)) * vol
    asset_r = drift + np.outer(market, beta) + noise
    index_r = market
    index_prices = 1000.0 * np.concatenate([[1.0], np.cumprod(1.0 + index_r)])
    start = rng.uniform(50, 5000, size=n_assets)
    asset_prices = start * np.vstack([np.ones(n_assets), np.cumprod(1.0 + asset_r, axis=0)])
    # keep four significant decimals like the OR-Library files
    return PriceTable(np.round(index_prices, 4), np.round(asset_prices, 4), name)


DATA_ENV = "CCPORTFOLIO_DATA_DIR"


def find_dataset(name: str):
    """Locate ``<name>.txt`` in the directory named by ``CCPORTFOLIO_DATA_DIR``.

    Returns ``None`` when the variable is unset or the file is missing.
    """
    root = os.environ.get(DATA_ENV)
    if not root:
        return None
    path = Path(root) / f"{name}.txt"
    return path if path.is_file() else None


# Stand-ins for the OR-Library files, used when the real data is absent.
# The indtrack5 parameters were fitted so that the unconstrained long-only
# minimum-variance portfolio of the single-index estimates holds about 16
# assets at a risk of about 0.0173, the published figures for that dataset
# (see demos/calibrate_standin.py).
STANDINS = {
    "indtrack5": dict(n_assets=225, n_periods=291, seed=0, market_vol=0.03,
                      beta_mean=1.0, beta_sd=0.2, idio_vol=(0.01, 0.045)),
    "indtrack6": dict(n_assets=457, n_periods=291, seed=6),
    "indtrack7": dict(n_assets=1318, n_periods=291, seed=7),
    "indtrack8": dict(n_assets=2151, n_periods=291, seed=8),
}


def load_dataset(name: str):
    """Real OR-Library file when available, else the matching stand-in.

    Returns
    -------
    (PriceTable, str)
        The prices and ``"real"`` or ``"stand-in"``.
    """
    path = find_dataset(name)
    if path is not None:
        return read_indtrack(path), "real"
    if name not in STANDINS:
        raise DataError(f"no data for {name!r}: set {DATA_ENV} to the OR-Library directory")
    return synthetic_indtrack(name=f"{name}-standin", **STANDINS[name]), "stand-in"
