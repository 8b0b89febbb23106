"""Property and acceptance checks, shared by ``ccportfolio verify`` and the tests.

Every check is deterministic (fixed seeds) and returns a :class:`CheckResult`
carrying its measurements, so failures can be inspected from the JSON summary.
"""

from __future__ import annotations

import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import analysis, data, exact, factors, heuristics, lp, models

__all__ = ["CheckResult", "CHECKS", "random_single_factor", "run_checks", "run_verify"]

# published dimensions for N=2151, four factors, K=50
TABLE_DIMS = {
    "CCMVFM": (2151, 2151, 2153),
    "CCMVFM_LA": (434351, 0, 2161),
    "EWCCMVFM": (2151, 0, 1),
    "EWCCMVFM_LA": (4151, 0, 10),
}
PUBLISHED_EW_K5 = 0.01831  # equal-weight single-factor risk, indtrack5, K=5


@dataclass
class CheckResult:
    name: str
    passed: bool
    seconds: float
    limit_seconds: float | None
    details: dict = field(default_factory=dict)
    soft: dict = field(default_factory=dict)  # reported, not gating

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        lim = f" (limit {self.limit_seconds:g}s)" if self.limit_seconds else ""
        return f"{tag} {self.name}: {self.seconds:.1f}s{lim} {_short(self.details)}"


def _short(d):
    keep = {k: v for k, v in d.items() if not isinstance(v, (list, dict))}
    return " ".join(f"{k}={_fmt(v)}" for k, v in keep.items())


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def random_single_factor(rng, n) -> factors.SingleFactorModel:
    """Betas around 1, residual variances and factor variance of comparable size."""
    return factors.SingleFactorModel(rng.normal(1.0, 0.5, n), rng.uniform(0.01, 1.0, n),
                                     float(rng.uniform(0.2, 2.0)))


def _timed(fn, name, limit):
    t0 = time.perf_counter()
    passed, details, soft = fn()
    sec = time.perf_counter() - t0
    if limit is not None and sec > limit:
        details["runtime_exceeded"] = True
        passed = False
    return CheckResult(name, bool(passed), sec, limit, details, soft)


# ---------------------------------------------------------------- checks

def check_dims(data_dir=None):
    prices, kind = data.load_dataset("indtrack8")
    fm = factors.fit_pca_factors(data.compute_returns(prices), 4)
    K = 50
    got, ok = {}, True
    built = {
        "CCMVFM": models.build_ccmvfm(fm, K),
        "CCMVFM_LA": models.build_ccmvfm_la(fm, K, mode="one-sided"),
        "EWCCMVFM": models.build_ewccmvfm(fm, K),
        "EWCCMVFM_LA": models.build_ewccmvfm_la(fm, K, mode="one-sided"),
    }
    for name, m in built.items():
        dims = (m.n01, m.nc, m.n_constraints)
        got[name] = list(dims)
        ok &= tuple(dims) == TABLE_DIMS[name]
    soft = {"two_sided_rows": {
        "CCMVFM_LA": models.build_ccmvfm_la(fm, K, mode="two-sided").n_constraints,
        "EWCCMVFM_LA": models.build_ewccmvfm_la(fm, K, mode="two-sided").n_constraints}}
    return ok, {"data": kind, "N": fm.n, "dims": got}, soft


def check_oracle():
    rng = np.random.default_rng(2)
    worst_excess, mismatches, clique_mismatch, nodes = 0.0, 0, 0, 0
    for _ in range(100):
        n = int(rng.integers(6, 16))
        K = int(rng.integers(2, 5))
        sf = random_single_factor(rng, n)
        bf = exact.brute_force_ew(sf, K)
        la = models.build_ewccmvfm_la(sf, K, models.default_grids(sf, K, n_beta=2000),
                                      "two-sided")
        res = lp.solve_binary_bb(la, time_limit=60)
        nodes += res.nodes
        bound = models.approximation_error_bound(la)
        tol = 1e-9 * max(1.0, abs(bf.objective))
        excess = res.objective - bf.objective
        if res.status != "optimal" or excess < -tol or excess > bound + tol:
            mismatches += 1
        worst_excess = max(worst_excess, excess / bound if bound > 0 else 0.0)
        clique = exact.brute_force_clique(models.to_mewcp(models.build_ewccmvsf(sf, K), K))
        clique_mismatch += clique.support != bf.support
    ok = mismatches == 0 and clique_mismatch == 0
    return ok, {"instances": 100, "bb_outside_bound": mismatches,
                "clique_support_mismatch": clique_mismatch,
                "worst_excess_over_bound": worst_excess, "bb_nodes": nodes}, {}


def check_fractional():
    rng = np.random.default_rng(3)
    worst, counts = 0, {}
    for _ in range(200):
        n = int(rng.integers(2, 201))
        K = int(rng.integers(1, min(20, n) + 1))
        r = exact.solve_relaxation_sf(random_single_factor(rng, n), K)
        worst = max(worst, r.fractional_count)
        counts[r.fractional_count] = counts.get(r.fractional_count, 0) + 1
    return worst <= 2, {"instances": 200, "max_fractional": worst,
                        "histogram": {str(k): v for k, v in sorted(counts.items())}}, {}


def _monge_report(sf, K):
    M, _ = analysis.monge_matrix(sf, K)
    return analysis.check_inverse_monge(M, 1e-10 * float(np.abs(M).max()))


def check_monge(data_path=None):
    if data_path:
        prices, kind = data.read_indtrack(data_path), "file"
    else:
        prices, kind = data.load_dataset("indtrack5")
    sf = factors.fit_single_index(data.compute_returns(prices))
    rep = _monge_report(sf, 5)
    ok = rep.is_inverse_monge
    rng = np.random.default_rng(4)
    random_fail = 0
    for _ in range(50):
        n = int(rng.integers(2, 60))
        random_fail += not _monge_report(random_single_factor(rng, n), int(rng.integers(1, n + 1))).is_inverse_monge
    disagree = 0
    for t in range(50):
        if t % 2:
            M = rng.normal(size=(12, 12))
        else:
            # sums of products of sorted vectors are inverse Monge
            a, b = np.sort(rng.normal(size=12)), np.sort(rng.normal(size=12))
            M = np.outer(a, b) + np.add.outer(rng.normal(size=12), rng.normal(size=12))
        fast = analysis.check_inverse_monge(M, 1e-12)
        slow = analysis.naive_monge_check(M, 1e-12)
        disagree += fast.is_inverse_monge != slow.is_inverse_monge
    ok = ok and random_fail == 0 and disagree == 0
    return ok, {"data": kind, "n": sf.n, "worst_violation": rep.worst_violation,
                "random_failures": random_fail, "adjacent_vs_naive_disagree": disagree}, {}


def check_heuristic():
    rng = np.random.default_rng(5)
    N = 200
    match = swap_opt = strict_match = strict_swap_opt = 0
    for _ in range(N):
        n = int(rng.integers(5, 16))
        K = int(rng.integers(2, min(5, n) + 1))
        sf = random_single_factor(rng, n)
        bf = exact.brute_force_ew(sf, K)
        tol = 1e-12 * (1.0 + bf.objective)
        t1 = heuristics.algorithm1(sf, K)
        full = heuristics.run_heuristic(sf, K)
        match += full.objective <= bf.objective + tol
        swap_opt += heuristics.is_swap_optimal(sf, t1.support)
        s1 = heuristics.algorithm1(sf, K, full_scan=False)
        strict = heuristics.algorithm2(sf, s1.support)
        strict_match += strict.objective <= bf.objective + tol
        strict_swap_opt += heuristics.is_swap_optimal(sf, s1.support)
    ok = match >= 0.95 * N and swap_opt == N
    return ok, {"instances": N, "optimal_fraction": match / N,
                "swap_optimal_fraction": swap_opt / N}, {
        "jstar_only_optimal_fraction": strict_match / N,
        "jstar_only_swap_optimal_fraction": strict_swap_opt / N}


def check_embedding():
    rng = np.random.default_rng(6)
    worst = 0.0
    cache = {}
    for t in range(1000):
        key = t // 50  # 20 instances, 50 subsets each
        if key not in cache:
            n = int(rng.integers(3, 30))
            m = int(rng.integers(1, 5))
            A = rng.normal(size=(m, m))
            fm = factors.MultiFactorModel(rng.normal(size=(m, n)), A @ A.T / m,
                                          rng.uniform(0, 1, n))
            cache[key] = fm
        fm = cache[key]
        K = int(rng.integers(1, fm.n + 1))
        T = rng.choice(fm.n, K, replace=False)
        ew = models.build_ewccmvfm(fm, K)
        cc = models.build_ccmvfm(fm, K)
        x = np.zeros(fm.n)
        x[T] = 1.0
        v = np.concatenate([x / K, x])
        a, b = ew.objective(x), cc.objective(v)
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    return worst <= 1e-12, {"pairs": 1000, "worst_rel_diff": worst}, {}


def check_frontier():
    on = differ = frac_ok = collinear = 0
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        rep = analysis.verify_frontier(random_single_factor(rng, 12), 4)
        on += rep.on_frontier
        differ += rep.differ_by_one
        frac_ok += rep.fractional_count <= 2
        collinear += rep.collinear
    ok = on == 100 and differ == 100
    return ok, {"instances": 100, "on_frontier": on, "differ_by_one": differ,
                "fractional_le_2": frac_ok, "collinear_detected": collinear}, {}


def check_anchor(data_path=None):
    if data_path:
        prices, kind = data.read_indtrack(data_path), "file"
    else:
        prices, kind = data.load_dataset("indtrack5")
    sf = factors.fit_single_index(data.compute_returns(prices))
    h5 = heuristics.run_heuristic(sf, 5)
    risk5 = math.sqrt(h5.objective)
    rel = abs(risk5 - PUBLISHED_EW_K5) / PUBLISHED_EW_K5
    h20 = heuristics.run_heuristic(sf, 20)
    shrink = h20.K < 20
    return shrink, {"data": kind, "final_K_from_20": h20.K, "risk_K5": risk5}, {
        "published_risk_K5": PUBLISHED_EW_K5, "rel_diff": rel, "within_5pct": rel <= 0.05}


def check_determinism():
    from .cli import build_parser, run_solve

    argv = ["solve", "--model", "ewccmvsf", "--k", "3,5", "--data", "synthetic:7:40:80",
            "--engine", "brute,bb,heuristic", "--format", "markdown"]
    texts = []
    for _ in range(2):
        ns = build_parser().parse_args(argv)
        texts.append(run_solve(ns)[0])
    same = texts[0].encode() == texts[1].encode()
    return same, {"bytes": len(texts[0]), "identical": same}, {}


def _fixture_files(fixture_dir):
    if fixture_dir:
        d = Path(fixture_dir)
        return (d / "mini.txt").read_text(), json.loads((d / "expected.json").read_text())
    pkg = resources.files("ccportfolio") / "fixtures"
    return ((pkg / "mini.txt").read_text(),
            json.loads((pkg / "expected.json").read_text()))


def fixture_values(text) -> dict:
    """Quantities recorded for the bundled mini fixture."""
    prices = data.parse_indtrack(text, "mini")
    sf = factors.fit_single_index(data.compute_returns(prices))
    bf = exact.brute_force_ew(sf, 3)
    h = heuristics.run_heuristic(sf, 3)
    ew_la = models.build_ewccmvfm_la(sf, 3)
    return {"n_assets": prices.n_assets, "n_periods": prices.n_periods,
            "sigma_f2": sf.sigma_f2, "beta_sum": float(sf.beta.sum()),
            "ew_K3_objective": bf.objective, "ew_K3_support": list(bf.support),
            "heuristic_K3_support": list(h.support),
            "ewccmvfm_la_dims": [ew_la.n01, ew_la.nc, ew_la.n_constraints]}


def check_fixture(fixture_dir=None):
    text, expected = _fixture_files(fixture_dir)
    got = fixture_values(text)
    bad = []
    for key, want in expected.items():
        have = got.get(key)
        if isinstance(want, float):
            if not (have is not None and abs(have - want) <= 1e-10 * max(1.0, abs(want))):
                bad.append(key)
        elif have != want:
            bad.append(key)
    return not bad, {"mismatched": ",".join(bad) or "none"}, {}


# name -> (callable taking options, runtime limit in seconds, description)
CHECKS = {
    "dims": (lambda o: check_dims(), 5.0, "model dimensions for N=2151, K=50"),
    "oracle": (lambda o: check_oracle(), 120.0, "B&B and clique vs brute force"),
    "fractional": (lambda o: check_fractional(), 60.0, "relaxation has <= 2 fractional values"),
    "monge": (lambda o: check_monge(o.get("data")), 60.0, "inverse Monge structure"),
    "heuristic": (lambda o: check_heuristic(), 60.0, "heuristic quality vs brute force"),
    "embedding": (lambda o: check_embedding(), 10.0, "equal-weight embedding identity"),
    "frontier": (lambda o: check_frontier(), 120.0, "relaxation optimum on hull frontier"),
    "anchor": (lambda o: check_anchor(o.get("data")), 30.0, "indtrack5 heuristic behaviour"),
    "determinism": (lambda o: check_determinism(), None, "byte-identical solve reports"),
    "fixture": (lambda o: check_fixture(o.get("fixture_dir")), None, "bundled mini fixture"),
}


def run_checks(names=None, options=None) -> list[CheckResult]:
    options = options or {}
    names = list(CHECKS) if not names else names
    out = []
    for name in names:
        if name not in CHECKS:
            raise ValueError(f"unknown check {name!r}; choose from {', '.join(CHECKS)}")
        fn, limit, _ = CHECKS[name]
        out.append(_timed(lambda: fn(options), name, limit))
    return out


def run_verify(ns) -> int:
    names = []
    for s in ns.suite or []:
        names.extend(p.strip() for p in s.split(",") if p.strip() and p.strip() != "all")
    results = run_checks(names, {"data": ns.data, "fixture_dir": ns.fixture_dir})
    for r in results:
        print(r.line())
        if r.soft:
            print(f"     info: {json.dumps(r.soft, sort_keys=True)}")
    summary = {"passed": all(r.passed for r in results),
               "checks": [asdict(r) for r in results]}
    if ns.json:
        payload = json.dumps(summary, indent=2, sort_keys=True, default=_json_default)
        if ns.json == "-":
            sys.stdout.write(payload + "\n")
        else:
            Path(ns.json).write_text(payload + "\n")
    return 0 if summary["passed"] else 2


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))
