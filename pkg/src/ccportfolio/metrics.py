"""Comparison metrics and result tables."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "UNDEFINED",
    "SolutionReport",
    "pct_desv",
    "portfolio_sd",
    "sharpe_ratio",
    "l1_distance",
    "overlap",
    "sample_covariance",
    "make_report",
    "emit_table",
    "parse_csv",
]

UNDEFINED = "n/a"
_SUPPORT_TOL = 1e-9


def pct_desv(obj: float, obj_ref: float) -> float:
    """Relative deviation ``100 (obj - obj_ref) / obj_ref``; NaN when ``obj_ref`` is 0."""
    if obj_ref == 0 or not math.isfinite(obj_ref) or not math.isfinite(obj):
        return math.nan
    return 100.0 * (obj - obj_ref) / obj_ref


def portfolio_sd(w, Sigma) -> float:
    """``sqrt(w^T Sigma w)``; tiny negative quadratic forms are clipped to 0."""
    w = np.asarray(w, float)
    q = float(w @ np.asarray(Sigma, float) @ w)
    if q < -1e-12 * max(1.0, float(np.abs(Sigma).max())):
        raise ValueError(f"negative portfolio variance {q!r}: covariance is not PSD")
    return math.sqrt(max(q, 0.0))


def sharpe_ratio(w, mean_returns, Sigma) -> float:
    """Mean return over standard deviation (no risk-free rate); NaN if SD is 0."""
    sd = portfolio_sd(w, Sigma)
    if sd == 0:
        return math.nan
    return float(np.asarray(w, float) @ np.asarray(mean_returns, float)) / sd


def l1_distance(w, w_ref) -> float:
    w, w_ref = np.asarray(w, float), np.asarray(w_ref, float)
    if w.shape != w_ref.shape:
        raise ValueError("weight vectors have different lengths")
    return float(np.abs(w - w_ref).sum())


def overlap(support, support_ref) -> int:
    return len(set(int(i) for i in support) & set(int(i) for i in support_ref))


def sample_covariance(asset_returns) -> np.ndarray:
    """Sample covariance (``1/(T-1)``) of a ``T x n`` return matrix."""
    return np.atleast_2d(np.cov(np.asarray(asset_returns, float), rowvar=False, ddof=1))


@dataclass(frozen=True)
class SolutionReport:
    K: int  # cardinality parameter of the run
    model_name: str
    time_seconds: float
    objective: float
    pct_desv: float
    n_assets: int
    overlap: int
    l1_distance: float
    sd: float
    sd_pct_desv: float
    sr: float

    @property
    def K_reported(self) -> str:
        return f"{self.n_assets} - {self.overlap}"


def make_report(model_name, K, weights, objective, reference_weights, reference_objective,
                Sigma_eval, mean_returns, time_seconds=math.nan) -> SolutionReport:
    """Assemble a report row, measuring against a reference portfolio."""
    w = np.asarray(weights, float)
    w_ref = np.asarray(reference_weights, float)
    sup = np.flatnonzero(w > _SUPPORT_TOL)
    sup_ref = np.flatnonzero(w_ref > _SUPPORT_TOL)
    sd = portfolio_sd(w, Sigma_eval)
    sd_ref = portfolio_sd(w_ref, Sigma_eval)
    return SolutionReport(
        K=int(K),
        model_name=model_name,
        time_seconds=float(time_seconds),
        objective=float(objective),
        pct_desv=pct_desv(objective, reference_objective),
        n_assets=int(sup.size),
        overlap=overlap(sup, sup_ref),
        l1_distance=l1_distance(w, w_ref),
        sd=sd,
        sd_pct_desv=pct_desv(sd, sd_ref),
        sr=sharpe_ratio(w, mean_returns, Sigma_eval),
    )


_COLUMNS = [
    ("K", "K", lambda r: str(r.K)),
    ("model", "model_name", lambda r: r.model_name),
    ("time", "time_seconds", lambda r: _num(r.time_seconds, 2)),
    ("obj", "objective", lambda r: _num(r.objective, 5)),
    ("%desv", "pct_desv", lambda r: _num(r.pct_desv, 2)),
    ("K-overlap", "K_reported", lambda r: r.K_reported),
    ("L1", "l1_distance", lambda r: _num(r.l1_distance, 3)),
    ("SD", "sd", lambda r: _num(r.sd, 5)),
    ("%desv_SD", "sd_pct_desv", lambda r: _num(r.sd_pct_desv, 2)),
    ("SR", "sr", lambda r: _num(r.sr, 4)),
]


def _num(v: float, digits: int) -> str:
    if v is None or not math.isfinite(v):
        return UNDEFINED
    s = f"{v:.{digits}f}"
    return "0." + "0" * digits if s == "-0." + "0" * digits else s


def emit_table(reports, fmt: str = "csv", include_time: bool = True) -> str:
    """Render report rows as CSV or a Markdown table.

    The objective carries five decimals. ``include_time=False`` drops the
    wall-clock column so that repeated runs give identical text.
    """
    cols = [c for c in _COLUMNS if include_time or c[0] != "time"]
    header = [c[0] for c in cols]
    rows = [[c[2](r) for c in cols] for r in reports]
    if fmt == "csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return out.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        lines += ["| " + " | ".join(row) + " |" for row in rows]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")


def _parse_num(s: str) -> float:
    return math.nan if s == UNDEFINED else float(s)


def parse_csv(text: str) -> list[SolutionReport]:
    """Read back a table written by :func:`emit_table` (values at printed precision)."""
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        n_assets, ov = (int(p) for p in rec["K-overlap"].split(" - "))
        out.append(SolutionReport(
            K=int(rec["K"]),
            model_name=rec["model"],
            time_seconds=_parse_num(rec["time"]) if "time" in rec else math.nan,
            objective=_parse_num(rec["obj"]),
            pct_desv=_parse_num(rec["%desv"]),
            n_assets=n_assets,
            overlap=ov,
            l1_distance=_parse_num(rec["L1"]),
            sd=_parse_num(rec["SD"]),
            sd_pct_desv=_parse_num(rec["%desv_SD"]),
            sr=_parse_num(rec["SR"]),
        ))
    return out

