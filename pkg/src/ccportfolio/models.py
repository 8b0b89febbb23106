"""Cardinality-constrained minimum-variance programs as abstract 0-1 models.

Every builder returns an immutable :class:`OptimizationModel`: bounded
variables (binary or continuous), sparse linear rows and an objective
``sum_{i<=j} Q[i, j] x_i x_j + c^T x + constant`` stored with ``Q`` upper
triangular (an off-diagonal entry carries the full ``2 q_ij`` weight).

The piecewise-linear models come in two flavours selected by ``mode``:

``"one-sided"``
    the aggregate factor exposure is only bounded from above by the selected
    breakpoint (the formulation exactly as published);
``"two-sided"``
    the selected segment must bracket the exposure from both sides and is
    charged ``max(b_{t-1}^2, b_t^2)``, which keeps the approximation an upper
    bound of the exact objective even for negative exposures. One extra row
    per factor.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .factors import MultiFactorModel, SingleFactorModel, as_multi, implied_covariance

log = logging.getLogger(__name__)

__all__ = [
    "Variable",
    "LinearConstraint",
    "OptimizationModel",
    "SegmentGrid",
    "MewcpInstance",
    "default_grids",
    "build_ccmvfm",
    "build_ccmvfm_la",
    "build_ewccmvfm",
    "build_ewccmvfm_la",
    "build_ewccmvsf",
    "to_mewcp",
    "format_lp",
    "export_lp",
    "dimension_report",
    "best_y",
    "la_point",
    "approximation_error_bound",
]

MODES = ("two-sided", "one-sided")


@dataclass(frozen=True)
class Variable:
    id: int
    name: str
    kind: str  # "binary" | "continuous"
    lower: float
    upper: float


@dataclass(frozen=True)
class LinearConstraint:
    coefficients: dict
    sense: str  # "<=" | "=" | ">="
    rhs: float
    name: str = ""


def _readonly(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


def canonical_quadratic(n, rows, cols, vals) -> sp.csr_matrix:
    """Fold the terms ``vals[k] * x[rows[k]] * x[cols[k]]`` into upper-triangular form."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    Q = sp.coo_matrix((np.asarray(vals, float), (lo, hi)), shape=(n, n)).tocsr()
    Q.sum_duplicates()
    Q.eliminate_zeros()
    return Q


def dense_to_canonical(M) -> sp.csr_matrix:
    """Canonical form of ``x^T M x`` for a dense square ``M``."""
    M = np.asarray(M, float)
    U = np.triu(M, 1) + np.triu(M.T, 1)
    U[np.diag_indices_from(U)] = np.diag(M)
    return sp.csr_matrix(U)


class OptimizationModel:
    """A minimisation problem over bounded binary/continuous variables."""

    def __init__(self, name, var_names, binary, lower, upper, A, senses, rhs,
                 row_names, linear, quadratic=None, constant=0.0, metadata=None):
        n = len(var_names)
        self.name = name
        self.var_names = tuple(var_names)
        self.binary = _readonly(np.asarray(binary, dtype=bool))
        self.lower = _readonly(np.asarray(lower, dtype=float))
        self.upper = _readonly(np.asarray(upper, dtype=float))
        A = sp.csr_matrix(A, shape=(len(rhs), n))
        A.sum_duplicates()
        self.A = A
        self.senses = tuple(senses)
        self.rhs = _readonly(np.asarray(rhs, dtype=float))
        self.row_names = tuple(row_names)
        self.linear = _readonly(np.asarray(linear, dtype=float))
        if quadratic is None:
            quadratic = sp.csr_matrix((n, n))
        self.quadratic = sp.csr_matrix(quadratic)
        self.constant = float(constant)
        meta = dict(metadata or {})
        meta.update(model_name=name, n01=self.n01, nc=self.nc, n_constraints=self.n_constraints)
        self.metadata = meta
        for s in self.senses:
            if s not in ("<=", "=", ">="):
                raise ValueError(f"bad constraint sense {s!r}")
        if self.quadratic.nnz and (sp.tril(self.quadratic, -1).nnz):
            raise ValueError("quadratic terms must be stored upper triangular")

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n01(self) -> int:
        return int(self.binary.sum())

    @property
    def nc(self) -> int:
        return int((~self.binary).sum())

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    @property
    def is_linear(self) -> bool:
        return self.quadratic.nnz == 0

    @property
    def K(self):
        return self.metadata.get("K")

    @property
    def variables(self) -> list[Variable]:
        return [
            Variable(i, nm, "binary" if b else "continuous", float(lo), float(up))
            for i, (nm, b, lo, up) in enumerate(zip(self.var_names, self.binary, self.lower, self.upper))
        ]

    @property
    def linear_constraints(self) -> list[LinearConstraint]:
        out = []
        A = self.A
        for r in range(A.shape[0]):
            sl = slice(A.indptr[r], A.indptr[r + 1])
            coeffs = dict(zip(A.indices[sl].tolist(), A.data[sl].tolist()))
            out.append(LinearConstraint(coeffs, self.senses[r], float(self.rhs[r]), self.row_names[r]))
        return out

    @property
    def quadratic_terms(self) -> dict:
        Q = self.quadratic.tocoo()
        return {(int(i), int(j)): float(v) for i, j, v in zip(Q.row, Q.col, Q.data)}

    def index(self, name: str) -> int:
        try:
            return self._name_index[name]
        except AttributeError:
            self._name_index = {nm: i for i, nm in enumerate(self.var_names)}
            return self._name_index[name]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ (self.quadratic @ x) + self.linear @ x + self.constant)

    def residuals(self, x) -> np.ndarray:
        """Signed violation of every row (positive means violated)."""
        lhs = self.A @ np.asarray(x, float)
        out = np.empty_like(lhs)
        for r, s in enumerate(self.senses):
            d = lhs[r] - self.rhs[r]
            out[r] = d if s == "<=" else (-d if s == ">=" else abs(d))
        return out

    def is_feasible(self, x, tol=1e-7) -> bool:
        x = np.asarray(x, float)
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            return False
        if np.any(np.abs(x[self.binary] - np.round(x[self.binary])) > 1e-6):
            return False
        return bool(np.all(self.residuals(x) <= tol))

    def dimensions(self) -> dict:
        return {"n01": self.n01, "nc": self.nc, "m": self.n_constraints}

    def __repr__(self):
        return (f"OptimizationModel({self.name!r}, n01={self.n01}, nc={self.nc}, "
                f"m={self.n_constraints}, quadratic={not self.is_linear})")


class _Builder:
    def __init__(self):
        self.names: list[str] = []
        self.binary: list[np.ndarray] = []
        self.lower: list[np.ndarray] = []
        self.upper: list[np.ndarray] = []
        self.n = 0
        self.rows: list[tuple] = []

    def add_vars(self, names, binary, lower=0.0, upper=1.0) -> np.ndarray:
        k = len(names)
        self.names.extend(names)
        self.binary.append(np.full(k, binary, dtype=bool))
        self.lower.append(np.full(k, lower, dtype=float))
        self.upper.append(np.full(k, upper, dtype=float))
        idx = np.arange(self.n, self.n + k)
        self.n += k
        return idx

    def add_row(self, cols, vals, sense, rhs, name):
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.broadcast_to(np.asarray(vals, dtype=float), cols.shape).ravel()
        self.rows.append((cols, vals, sense, float(rhs), name))

    def build(self, name, linear, quadratic=None, constant=0.0, metadata=None):
        indptr = np.zeros(len(self.rows) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([r[0].size for r in self.rows])
        indices = np.concatenate([r[0] for r in self.rows]) if self.rows else np.zeros(0, np.int64)
        data = np.concatenate([r[1] for r in self.rows]) if self.rows else np.zeros(0)
        A = sp.csr_matrix((data, indices, indptr), shape=(len(self.rows), self.n))
        return OptimizationModel(
            name, self.names, np.concatenate(self.binary), np.concatenate(self.lower),
            np.concatenate(self.upper), A, [r[2] for r in self.rows],
            [r[3] for r in self.rows], [r[4] for r in self.rows], linear, quadratic,
            constant, metadata,
        )


@dataclass(frozen=True, eq=False)
class SegmentGrid:
    """Breakpoints for asset weights and for every factor's aggregate loading."""

    w_breaks: np.ndarray
    beta_breaks: tuple

    def __post_init__(self):
        w = np.asarray(self.w_breaks, float)
        if w.size < 2 or w[0] != 0.0 or w[-1] != 1.0 or np.any(np.diff(w) <= 0):
            raise ValueError("w_breaks must increase strictly from 0 to 1")
        bb = tuple(np.asarray(b, float) for b in self.beta_breaks)
        for b in bb:
            if b.size == 0 or np.any(np.diff(b) <= 0):
                raise ValueError("beta_breaks must be non-empty and strictly increasing")
        object.__setattr__(self, "w_breaks", w)
        object.__setattr__(self, "beta_breaks", bb)

    @property
    def n_factors(self) -> int:
        return len(self.beta_breaks)


def default_grids(model, K: int, n_w: int | None = None, n_beta: int = 500) -> SegmentGrid:
    """Uniform grids: ``4K + 1`` weight levels and ``n_beta`` loading levels per factor.

    The loading grid of factor ``l`` spans ``[min_i B[l, i], max_i B[l, i]]``,
    which contains every convex combination of the asset loadings.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    mf = as_multi(model)
    n_w = 4 * K + 1 if n_w is None else n_w
    w = np.linspace(0.0, 1.0, n_w)
    bb = []
    for l in range(mf.m):
        lo, hi = mf.B[l].min(), mf.B[l].max()
        if hi - lo <= 1e-15 * max(1.0, abs(hi)):
            log.warning("factor %d has constant loadings; grid collapsed to one breakpoint", l)
            bb.append(np.array([lo]))
        else:
            bb.append(np.linspace(lo, hi, n_beta))
    return SegmentGrid(w, tuple(bb))


def _check_K(K, n):
    if not 1 <= K <= n:
        raise ValueError(f"cardinality K={K} must lie in [1, {n}]")


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def build_ccmvfm(model, K: int) -> OptimizationModel:
    """Mixed 0-1 quadratic program over weights ``w`` and selectors ``x``."""
    mf = as_multi(model)
    N = mf.n
    _check_K(K, N)
    b = _Builder()
    w = b.add_vars([f"w_{i}" for i in range(N)], False)
    x = b.add_vars([f"x_{i}" for i in range(N)], True)
    b.add_row(w, 1.0, "=", 1.0, "budget")
    b.add_row(x, 1.0, "<=", K, "cardinality")
    for i in range(N):
        b.add_row([w[i], x[i]], [1.0, -1.0], "<=", 0.0, f"link_{i}")
    cov = implied_covariance(mf)
    U = dense_to_canonical(cov)
    Q = sp.bmat([[U, None], [None, sp.csr_matrix((N, N))]], format="csr")
    meta = {"K": K, "N": N, "NF": mf.m, "w_index": w, "x_index": x}
    return b.build("CCMVFM", np.zeros(2 * N), Q, 0.0, meta)


def _factor_costs(mf, grid, mode):
    """Linear cost of each ``y_l^t`` (same-factor part of the objective)."""
    costs = []
    for l, bk in enumerate(grid.beta_breaks):
        if mode == "two-sided":
            lower = np.concatenate([[bk[0]], bk[:-1]])
            sq = np.maximum(lower**2, bk**2)
        else:
            sq = bk**2
        costs.append(mf.Sigma_F[l, l] * sq)
    return costs


def _factor_cross_terms(mf, grid, y_index):
    rows, cols, vals = [], [], []
    for l in range(mf.m):
        for m_ in range(l + 1, mf.m):
            s = mf.Sigma_F[l, m_]
            if s == 0.0:
                continue
            bl, bm = grid.beta_breaks[l], grid.beta_breaks[m_]
            tt, uu = np.meshgrid(np.arange(bl.size), np.arange(bm.size), indexing="ij")
            rows.append(y_index[l][tt.ravel()])
            cols.append(y_index[m_][uu.ravel()])
            vals.append(2.0 * s * np.outer(bl, bm).ravel())
    if not rows:
        return [], [], []
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def _add_y(b, mf, grid):
    if grid.n_factors != mf.m:
        raise ValueError("grid has a different number of factors than the model")
    y_index = []
    for l, bk in enumerate(grid.beta_breaks):
        y_index.append(b.add_vars([f"y_{l}_{t}" for t in range(bk.size)], True))
    return y_index


def _add_linkage(b, grid, y_index, cols, exposure, mode, l):
    bk = grid.beta_breaks[l]
    b.add_row(np.concatenate([cols, y_index[l]]), np.concatenate([exposure, -bk]),
              "<=", 0.0, f"link_up_{l}")
    if mode == "two-sided":
        lower = np.concatenate([[bk[0]], bk[:-1]])
        b.add_row(np.concatenate([cols, y_index[l]]), np.concatenate([exposure, -lower]),
                  ">=", 0.0, f"link_lo_{l}")


def build_ccmvfm_la(model, K: int, grid: SegmentGrid | None = None,
                    mode: str = "two-sided") -> OptimizationModel:
    """Pure 0-1 piecewise-linear approximation of :func:`build_ccmvfm`.

    ``x_i_s`` fixes the weight of asset ``i`` at level ``w_breaks[s]`` and
    ``y_l_t`` selects the loading segment of factor ``l``. With uncorrelated
    factors the objective is linear.
    """
    _check_mode(mode)
    mf = as_multi(model)
    N = mf.n
    _check_K(K, N)
    grid = default_grids(mf, K) if grid is None else grid
    wl = grid.w_breaks
    S = wl.size
    b = _Builder()
    x = b.add_vars([f"x_{i}_{s}" for i in range(N) for s in range(S)], True).reshape(N, S)
    y_index = _add_y(b, mf, grid)
    for i in range(N):
        b.add_row(x[i], 1.0, "=", 1.0, f"assign_{i}")
    for l in range(mf.m):
        b.add_row(y_index[l], 1.0, "=", 1.0, f"segment_{l}")
    pos = x[:, 1:].ravel()
    b.add_row(pos, 1.0, "<=", K, "cardinality")
    lev = np.broadcast_to(wl[1:], (N, S - 1)).ravel()
    b.add_row(pos, lev, "=", 1.0, "budget")
    for l in range(mf.m):
        exposure = (mf.B[l][:, None] * wl[1:][None, :]).ravel()
        _add_linkage(b, grid, y_index, pos, exposure, mode, l)

    c = np.zeros(b.n)
    c[x.ravel()] = (mf.sigma_eps2[:, None] * wl[None, :] ** 2).ravel()
    for l, cost in enumerate(_factor_costs(mf, grid, mode)):
        c[y_index[l]] = cost
    r, cc, v = _factor_cross_terms(mf, grid, y_index)
    Q = canonical_quadratic(b.n, r, cc, v) if len(r) else None
    meta = {"K": K, "N": N, "NF": mf.m, "mode": mode, "grid": grid,
            "x_index": x, "y_index": y_index, "w_levels": wl,
            "factor_var": np.diag(mf.Sigma_F).copy(), "sigma_eps2": mf.sigma_eps2.copy()}
    return b.build("CCMVFM_LA", c, Q, 0.0, meta)


def build_ewccmvfm(model, K: int, name: str = "EWCCMVFM") -> OptimizationModel:
    """Equal-weight model: choose exactly ``K`` assets, each held at ``1/K``.

    The residual-variance term uses ``x_i`` in place of ``x_i^2``.
    """
    mf = as_multi(model)
    N = mf.n
    _check_K(K, N)
    b = _Builder()
    x = b.add_vars([f"x_{i}" for i in range(N)], True)
    b.add_row(x, 1.0, "=", K, "cardinality")
    Q = dense_to_canonical(mf.B.T @ mf.Sigma_F @ mf.B / K**2)
    c = mf.sigma_eps2 / K**2
    meta = {"K": K, "N": N, "NF": mf.m, "x_index": x}
    return b.build(name, c, Q, 0.0, meta)


def build_ewccmvsf(model: SingleFactorModel, K: int) -> OptimizationModel:
    """Single-factor special case of :func:`build_ewccmvfm`."""
    if not isinstance(model, SingleFactorModel):
        raise TypeError("build_ewccmvsf expects a SingleFactorModel")
    return build_ewccmvfm(model, K, name="EWCCMVSF")


def build_ewccmvfm_la(model, K: int, grid: SegmentGrid | None = None,
                      mode: str = "two-sided") -> OptimizationModel:
    """Piecewise-linear approximation of the equal-weight model.

    The exposure of factor ``l`` is the average loading ``(1/K) sum_i B[l, i] x_i``
    and the selected breakpoint ``b`` is charged ``Sigma_F[l, l] * b^2``, the
    same scale as the exact term ``(1/K^2) Sigma_F[l, l] (sum_i B[l, i] x_i)^2``.
    Cardinality is written both as ``sum x <= K`` and as the budget row
    ``sum x / K = 1``.
    """
    _check_mode(mode)
    mf = as_multi(model)
    N = mf.n
    _check_K(K, N)
    grid = default_grids(mf, K) if grid is None else grid
    b = _Builder()
    x = b.add_vars([f"x_{i}" for i in range(N)], True)
    y_index = _add_y(b, mf, grid)
    b.add_row(x, 1.0, "<=", K, "cardinality")
    b.add_row(x, 1.0 / K, "=", 1.0, "budget")
    for l in range(mf.m):
        _add_linkage(b, grid, y_index, x, mf.B[l] / K, mode, l)
    for l in range(mf.m):
        b.add_row(y_index[l], 1.0, "=", 1.0, f"segment_{l}")
    c = np.zeros(b.n)
    c[x] = mf.sigma_eps2 / K**2
    for l, cost in enumerate(_factor_costs(mf, grid, mode)):
        c[y_index[l]] = cost
    r, cc, v = _factor_cross_terms(mf, grid, y_index)
    Q = canonical_quadratic(b.n, r, cc, v) if len(r) else None
    meta = {"K": K, "N": N, "NF": mf.m, "mode": mode, "grid": grid,
            "x_index": x, "y_index": y_index,
            "factor_var": np.diag(mf.Sigma_F).copy(), "sigma_eps2": mf.sigma_eps2.copy()}
    return b.build("EWCCMVFM_LA", c, Q, 0.0, meta)


def best_y(model: OptimizationModel, exposures) -> np.ndarray:
    """Cheapest admissible segment per factor for given aggregate exposures.

    Only valid for models without cross-factor quadratic terms. Returns the
    chosen segment index per factor (``-1`` if no segment is admissible).
    """
    grid, mode = model.metadata["grid"], model.metadata["mode"]
    out = []
    for l, bk in enumerate(grid.beta_breaks):
        e = exposures[l]
        tol = 1e-12 * max(1.0, np.abs(bk).max())
        ok = e <= bk + tol
        if mode == "two-sided":
            lower = np.concatenate([[bk[0]], bk[:-1]])
            ok &= e >= lower - tol
        if not ok.any():
            out.append(-1)
            continue
        cost = model.linear[model.metadata["y_index"][l]]
        cand = np.flatnonzero(ok)
        out.append(int(cand[np.argmin(cost[cand])]))
    return np.array(out)


def la_point(model: OptimizationModel, selection, y=None) -> np.ndarray:
    """Full 0-1 vector of a piecewise-linear model.

    ``selection`` is the support (``EWCCMVFM_LA``) or the weight level index
    of every asset (``CCMVFM_LA``). ``y`` gives the segment per factor; the
    cheapest admissible segment is used when omitted.
    """
    meta = model.metadata
    v = np.zeros(model.n_vars)
    if model.name == "EWCCMVFM_LA":
        xs = np.zeros(meta["N"])
        xs[np.asarray(selection, dtype=int)] = 1.0
        v[meta["x_index"]] = xs
        A_x = model.A[:, meta["x_index"]]
    elif model.name == "CCMVFM_LA":
        lev = np.asarray(selection, dtype=int)
        v[meta["x_index"][np.arange(meta["N"]), lev]] = 1.0
        A_x = None
    else:
        raise ValueError("la_point only applies to piecewise-linear models")
    if y is None:
        exposures = []
        for l in range(meta["NF"]):
            r = model.row_names.index(f"link_up_{l}")
            row = model.A.getrow(r).toarray().ravel()
            row[meta["y_index"][l]] = 0.0
            exposures.append(float(row @ v))
        y = best_y(model, exposures)
    for l, t in enumerate(y):
        if t >= 0:
            v[meta["y_index"][l][t]] = 1.0
    return v


def approximation_error_bound(model: OptimizationModel, weights=None) -> float:
    """Worst-case excess of a two-sided piecewise-linear objective.

    For uncorrelated factors and a fixed selection, the piecewise-linear
    value exceeds the exact objective by at most
    ``sum_l Sigma_F[l, l] * db_l * (2 max|b_l| + db_l)`` where ``db_l`` is the
    widest loading segment. ``CCMVFM_LA`` adds
    ``sum_i eps_i * dw * (2 w_i + dw)`` for rounding continuous weights
    ``w`` (taken as 1 when omitted) up to the weight grid.
    """
    meta = model.metadata
    if meta.get("mode") != "two-sided":
        raise ValueError("the bound holds for two-sided piecewise-linear models only")
    grid = meta["grid"]
    total = 0.0
    for sll, bk in zip(meta["factor_var"], grid.beta_breaks):
        db = float(np.diff(bk).max()) if bk.size > 1 else 0.0
        total += float(sll) * db * (2.0 * float(np.abs(bk).max()) + db)
    if model.name == "CCMVFM_LA":
        dw = float(np.diff(grid.w_breaks).max())
        w = np.ones(meta["N"]) if weights is None else np.asarray(weights, float)
        total += float(np.sum(meta["sigma_eps2"] * dw * (2.0 * w + dw)))
    return total


@dataclass(frozen=True, eq=False)
class MewcpInstance:
    """Maximum edge-weighted clique instance: pick ``k`` nodes maximising ``sum c_ij``."""

    n: int
    k: int
    c: np.ndarray  # strictly upper triangular weights
    G: float
    a: np.ndarray  # symmetric quadratic coefficients of the source model

    def weight(self, subset) -> float:
        s = np.sort(np.asarray(subset, dtype=int))
        return float(np.triu(self.c[np.ix_(s, s)], 1).sum())


def to_mewcp(ew: OptimizationModel, K: int | None = None) -> MewcpInstance:
    """Rewrite an equal-weight model ``min x^T a x, sum x = K`` as a max-clique problem.

    ``c_ij = G - (2 a_ij + (a_ii + a_jj) / (K - 1))`` so that for every
    ``K``-subset ``T``: ``sum_{i<j in T} c_ij = C(K, 2) G - sum_{i,j in T} a_ij``.
    ``G`` is large enough to make every edge weight positive.
    """
    K = ew.K if K is None else K
    if ew.name not in ("EWCCMVFM", "EWCCMVSF"):
        raise ValueError("to_mewcp expects an equal-weight model")
    if K is None or K < 2:
        raise ValueError("the clique transformation needs K >= 2")
    n = ew.n_vars
    U = ew.quadratic.toarray()
    a = (U + U.T) / 2.0
    a[np.diag_indices(n)] = np.diag(U) + ew.linear
    d = np.diag(a)
    iu = np.triu_indices(n, 1)
    spread = np.abs(a[iu]) + (np.abs(d)[iu[0]] + np.abs(d)[iu[1]]) / (K - 1)
    M = spread.max() if spread.size else 0.0
    G = 2.0 * M if M > 0 else 1.0
    c = np.zeros((n, n))
    c[iu] = G - (2.0 * a[iu] + (d[iu[0]] + d[iu[1]]) / (K - 1))
    return MewcpInstance(n, K, c, G, a)


def _fmt(v: float) -> str:
    return repr(float(v))


def _terms(idx, vals, names, first=True):
    parts = []
    for j, v in zip(idx, vals):
        if v == 0:
            continue
        sign = "-" if v < 0 else "+"
        if first and sign == "+":
            parts.append(f"{_fmt(abs(v))} {names[j]}")
        else:
            parts.append(f"{sign} {_fmt(abs(v))} {names[j]}")
        first = False
    return parts


def format_lp(model: OptimizationModel) -> str:
    """CPLEX LP-format text of ``model``."""
    names = model.var_names
    lines = [f"\\ {model.name}", "Minimize"]
    nz = np.flatnonzero(model.linear)
    obj = _terms(nz, model.linear[nz], names)
    if model.quadratic.nnz:
        Q = model.quadratic.tocoo()
        q = []
        for i, j, v in sorted(zip(Q.row.tolist(), Q.col.tolist(), Q.data.tolist())):
            sign = "-" if v < 0 else "+"
            term = f"{names[i]} ^2" if i == j else f"{names[i]} * {names[j]}"
            q.append(f"{sign} {_fmt(2 * abs(v))} {term}")
        if q[0].startswith("+ "):
            q[0] = q[0][2:]
        obj.append(("+ " if obj else "") + "[ " + " ".join(q) + " ] / 2")
    if model.constant:
        obj.append(f"{'-' if model.constant < 0 else '+'} {_fmt(abs(model.constant))}")
    lines.append(" obj: " + (" ".join(obj) if obj else "0 " + names[0]))
    lines.append("Subject To")
    A = model.A
    for r in range(A.shape[0]):
        sl = slice(A.indptr[r], A.indptr[r + 1])
        t = _terms(A.indices[sl], A.data[sl], names)
        lhs = " ".join(t) if t else f"0 {names[0]}"
        lines.append(f" {model.row_names[r][:255]}: {lhs} {model.senses[r]} {_fmt(model.rhs[r])}")
    lines.append("Bounds")
    for j in np.flatnonzero(~model.binary):
        lines.append(f" {_fmt(model.lower[j])} <= {names[j]} <= {_fmt(model.upper[j])}")
    if model.binary.any():
        lines.append("Binaries")
        lines.extend(f" {names[j]}" for j in np.flatnonzero(model.binary))
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp(model: OptimizationModel, path) -> Path:
    path = Path(path)
    path.write_text(format_lp(model))
    return path


def dimension_report(model: OptimizationModel, as_json: bool = False):
    meta = model.metadata
    rep = {"model": model.name, "N": meta.get("N"), "NF": meta.get("NF"), "K": meta.get("K"),
           "n01": model.n01, "nc": model.nc, "m": model.n_constraints}
    return json.dumps(rep) if as_json else rep
