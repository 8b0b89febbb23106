"""Command-line front end: ``ccportfolio solve | verify | adhoc``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, data, exact, factors, heuristics, lp, metrics, models

log = logging.getLogger("ccportfolio")

EXIT_OK = 0
EXIT_VERIFY = 2
EXIT_INPUT = 3
EXIT_LIMIT = 4
EXIT_LIMIT_NO_INCUMBENT = 5

MODELS = ("ccmvfm", "ccmvfm-la", "ewccmvfm", "ewccmvfm-la", "ewccmvsf", "heuristic", "mewcp")
ENGINES = ("brute", "bb", "heuristic")
DEFAULT_ENGINE = {"ccmvfm": "brute", "ccmvfm-la": "bb", "ewccmvfm": "brute",
                  "ewccmvfm-la": "bb", "ewccmvsf": "bb", "heuristic": "heuristic",
                  "mewcp": "brute"}
SINGLE_ONLY = ("ewccmvsf", "heuristic")
MODE_ALIASES = {"one-sided": "one-sided", "paper-faithful": "one-sided",
                "two-sided": "two-sided"}


class InputError(Exception):
    """Bad command-line input; maps to exit code 3."""


@dataclass
class Instance:
    model: object  # SingleFactorModel or MultiFactorModel
    returns: object | None  # ReturnTable, absent for instance CSV input
    label: str


@dataclass
class Solution:
    name: str
    weights: np.ndarray | None
    status: str = "optimal"
    seconds: float = 0.0
    note: str = ""
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------- loading

def _factor_spec(spec: str, model_name: str):
    if spec in (None, "", "auto"):
        return ("single", 1) if model_name in SINGLE_ONLY else ("pca", 4)
    if spec in ("single", "single-index"):
        return ("single", 1)
    if spec.startswith("pca"):
        _, _, m = spec.partition(":")
        try:
            return ("pca", int(m) if m else 4)
        except ValueError:
            raise InputError(f"bad factor spec {spec!r}; use single or pca:m") from None
    raise InputError(f"bad factor spec {spec!r}; use single or pca:m")


def _read_prices(src: str):
    if src.startswith("synthetic"):
        parts = src.split(":")[1:]
        seed = int(parts[0]) if parts else 0
        n = int(parts[1]) if len(parts) > 1 else 225
        T = int(parts[2]) if len(parts) > 2 else 291
        return data.synthetic_indtrack(n, T, seed, name=src)
    p = Path(src)
    if p.is_file():
        return data.read_indtrack(p)
    if src in data.STANDINS:
        prices, kind = data.load_dataset(src)
        log.info("%s: using %s data", src, kind)
        return prices
    raise InputError(f"data source {src!r} not found")


def load_instance(sources, factor_spec, returns_scheme="simple") -> Instance:
    """Build the factor model named by ``factor_spec`` from one or more sources.

    A ``.csv`` source is a single-factor instance file. Several sources are
    concatenated (single-factor only).
    """
    if not sources:
        raise InputError("no --data given")
    kind, m = factor_spec
    if len(sources) == 1 and sources[0].endswith(".csv"):
        if kind != "single":
            raise InputError("instance CSV files hold single-factor models only")
        return Instance(factors.read_instance_csv(sources[0]), None, Path(sources[0]).stem)
    if len(sources) > 1:
        if kind != "single":
            raise InputError("several data sources can only be combined for single-factor runs")
        parts = []
        for s in sources:
            if s.endswith(".csv"):
                parts.append(factors.read_instance_csv(s))
            else:
                parts.append(factors.fit_single_index(
                    data.compute_returns(_read_prices(s), returns_scheme)))
        return Instance(data.concat_instances(parts), None, "+".join(Path(s).stem for s in sources))
    prices = _read_prices(sources[0])
    rets = data.compute_returns(prices, returns_scheme)
    if kind == "single":
        fm = factors.fit_single_index(rets)
    else:
        fm = factors.fit_pca_factors(rets, m)
    return Instance(fm, rets, prices.source_name or sources[0])


# ---------------------------------------------------------------- solving

def _ew_weights(n, support, K=None):
    w = np.zeros(n)
    if support:
        w[list(support)] = 1.0 / (K if K else len(support))
    return w


def _grid(fm, K, cfg):
    return models.default_grids(fm, K, cfg.n_w, cfg.n_beta)


def _display_name(model_name, single):
    base = {"ccmvfm": "CCMVFM", "ccmvfm-la": "CCMVFM_LA", "ewccmvfm": "EWCCMVFM",
            "ewccmvfm-la": "EWCCMVFM_LA", "ewccmvsf": "EWCCMVSF", "heuristic": "Alg1+Alg2",
            "mewcp": "MEWCP"}[model_name]
    if single and base.startswith(("CCMVFM", "EWCCMVFM")):
        base = base.replace("FM", "SF")
    return base


def _decode_la(model, x):
    meta = model.metadata
    if model.name == "CCMVFM_LA":
        sel = x[meta["x_index"]]  # N x levels
        return meta["w_levels"][np.argmax(sel, axis=1)]
    sup = np.flatnonzero(x[meta["x_index"]] > 0.5)
    return _ew_weights(meta["N"], tuple(sup))


def _build(model_name, fm, K, cfg):
    if model_name == "ccmvfm":
        return models.build_ccmvfm(fm, K)
    if model_name == "ccmvfm-la":
        return models.build_ccmvfm_la(fm, K, _grid(fm, K, cfg), cfg.mode)
    if model_name == "ewccmvfm-la":
        return models.build_ewccmvfm_la(fm, K, _grid(fm, K, cfg), cfg.mode)
    if model_name == "ewccmvsf":
        return models.build_ewccmvsf(fm, K)
    return models.build_ewccmvfm(fm, K)


def solve_one(model_name, engine, inst: Instance, K, cfg) -> Solution:
    fm = inst.model
    single = isinstance(fm, factors.SingleFactorModel)
    n = fm.n
    if not 1 <= K <= n:
        raise InputError(f"K={K} must lie in [1, {n}]")
    if model_name in SINGLE_ONLY and not single:
        raise InputError(f"model {model_name} needs a single-factor instance (--factor single)")
    name = _display_name(model_name, single)
    t0 = time.perf_counter()
    combo = (model_name, engine)
    try:
        if combo == ("ccmvfm", "brute"):
            s = exact.brute_force_ccmv(fm, K, cfg.enum_cap)
            sol = Solution(name, s.weights)
        elif model_name in ("ccmvfm-la", "ewccmvfm-la") and engine == "bb":
            m = _build(model_name, fm, K, cfg)
            res = lp.solve_binary_bb(m, cfg.time_limit, cfg.node_limit)
            w = _decode_la(m, res.x) if res.x is not None else None
            sol = Solution(name, w, res.status,
                           extra={"nodes": res.nodes, "bound": res.bound})
        elif model_name in ("ewccmvfm", "ewccmvsf") and engine == "brute":
            s = exact.brute_force_ew(fm, K, cfg.enum_cap)
            sol = Solution(name, s.weights)
        elif model_name in ("ewccmvfm", "ewccmvsf") and engine == "bb":
            if not single:
                raise InputError("the bb engine for the equal-weight model needs a single factor")
            s, st = exact.solve_ew_sf_bb(fm, K, cfg.time_limit, cfg.node_limit)
            w = s.weights if s.support is not None else None
            sol = Solution(name, w, st["status"], extra={"nodes": st["nodes"]})
        elif model_name == "ewccmvsf" and engine == "heuristic":
            tr = heuristics.algorithm1(fm, K)
            sol = Solution("Alg1", _ew_weights(n, tr.support), extra={"trace": tr})
        elif model_name == "heuristic":
            tr = heuristics.run_heuristic(fm, K)
            sol = Solution(name, _ew_weights(n, tr.support), extra={"trace": tr})
        elif model_name == "mewcp" and engine == "brute":
            if K < 2:
                raise InputError("the clique transform needs K >= 2")
            inst_c = models.to_mewcp(models.build_ewccmvfm(fm, K), K)
            s = exact.brute_force_clique(inst_c, cfg.enum_cap)
            sol = Solution(name, _ew_weights(n, s.support, K))
        else:
            raise InputError(f"engine {engine!r} is not available for model {model_name!r}")
    except exact.CapExceededError as exc:
        sol = Solution(name, None, "limit-no-incumbent", note=str(exc))
    sol.seconds = time.perf_counter() - t0
    return sol


def _risk(cov, w):
    return float(np.sqrt(max(float(w @ cov @ w), 0.0)))


def reference_solution(inst: Instance, K, candidates, cfg):
    """Exact long-only ``K``-asset minimum variance when enumeration is cheap,
    else the best portfolio found by re-optimising candidate supports."""
    fm = inst.model
    cov = factors.implied_covariance(fm)
    n = fm.n
    k = min(K, n)
    if math.comb(n, k) <= cfg.ref_cap:
        s = exact.brute_force_ccmv(fm, K, n_cap=10 * cfg.ref_cap + n)
        return s.weights, "exact"
    best_w, best_v = None, math.inf
    supports = [tuple(np.flatnonzero(w > 1e-12)) for w in candidates if w is not None]
    if n <= 1000:
        w_full = exact.qp_support(cov, range(n))
        if np.count_nonzero(w_full > 1e-12) <= K:
            # the cardinality limit does not bind
            return w_full, "exact"
        supports.append(tuple(np.sort(np.argsort(-w_full, kind="stable")[:K])))
    for sup in supports:
        if not sup or len(sup) > K:
            continue
        w = exact.qp_support(cov, sup)
        v = float(w @ cov @ w)
        if v < best_v:
            best_w, best_v = w, v
    return best_w, "best-known"


def run_solve(cfg) -> tuple[str, int]:
    """Run ``solve`` and return the rendered report and exit code."""
    model_name = cfg.model
    if model_name not in MODELS:
        raise InputError(f"unknown model {model_name!r}")
    ks = _k_list(cfg.k)
    spec = _factor_spec(cfg.factor, model_name)
    if cfg.factor in (None, "", "auto") and cfg.data and all(d.endswith(".csv") for d in cfg.data):
        spec = ("single", 1)  # instance files hold single-factor estimates
    inst = load_instance(cfg.data, spec, cfg.returns)
    single = isinstance(inst.model, factors.SingleFactorModel)

    if cfg.dims_only:
        lines = []
        for K in ks:
            if model_name in ("heuristic", "mewcp"):
                raise InputError("--dims-only applies to the optimisation models")
            m = _build(model_name, inst.model, K, cfg)
            rep = models.dimension_report(m)
            if cfg.format == "json":
                lines.append(json.dumps(rep, sort_keys=True))
            else:
                lines.append(f"{rep['model']} K={K} N={rep['N']} NF={rep['NF']} "
                             f"n01={rep['n01']} nc={rep['nc']} m={rep['m']}")
            if cfg.lp_out:
                models.export_lp(m, _per_k(cfg.lp_out, K, len(ks)))
        return "\n".join(lines) + "\n", EXIT_OK

    engines = _engine_list(cfg.engine, model_name)
    if inst.returns is not None and cfg.sd_cov == "sample":
        sigma_eval = metrics.sample_covariance(inst.returns.asset_returns)
        mean = inst.returns.mean_returns
    else:
        sigma_eval = factors.implied_covariance(inst.model)
        mean = inst.model.alpha
    cov = factors.implied_covariance(inst.model)
    reports, notes, worst = [], [], EXIT_OK
    ref_name = "CCMVSF" if single else "CCMVFM"
    for K in ks:
        sols = [solve_one(model_name, e, inst, K, cfg) for e in engines]
        if len(engines) > 1:
            for s, e in zip(sols, engines):
                s.name = f"{s.name} [{e}]"
        w_ref, how = reference_solution(inst, K, [s.weights for s in sols], cfg)
        v_ref = _risk(cov, w_ref)
        rows = [metrics.make_report(f"{ref_name} ({how})", K, w_ref, v_ref, w_ref, v_ref,
                                    sigma_eval, mean)]
        for s in sols:
            if s.status in ("feasible-at-limit",):
                worst = max(worst, EXIT_LIMIT)
            if s.weights is None:
                worst = max(worst, EXIT_LIMIT_NO_INCUMBENT)
                notes.append(f"K={K} {s.name}: {s.status} {s.note}".rstrip())
                continue
            if s.status != "optimal":
                notes.append(f"K={K} {s.name}: {s.status}")
            rows.append(metrics.make_report(s.name, K, s.weights, _risk(cov, s.weights), w_ref,
                                            v_ref, sigma_eval, mean, s.seconds))
            tr = s.extra.get("trace")
            if tr is not None and cfg.trace_out:
                heuristics.write_trace_csv(tr, _per_k(cfg.trace_out, K, len(ks)))
        reports.extend(rows)
        if cfg.lp_out and model_name not in ("heuristic", "mewcp"):
            models.export_lp(_build(model_name, inst.model, K, cfg),
                             _per_k(cfg.lp_out, K, len(ks)))
    if cfg.format == "json":
        text = _json_reports(reports, cfg.timing)
    else:
        text = metrics.emit_table(reports, cfg.format, include_time=cfg.timing)
    if cfg.format == "markdown":
        cov_note = "sample" if (inst.returns is not None and cfg.sd_cov == "sample") else "factor-implied"
        text += f"\nSD and SR use the {cov_note} covariance; obj is the factor-model risk.\n"
    for n_ in notes:
        log.warning(n_)
    return text, worst


def _json_reports(reports, timing):
    rows = []
    for r in reports:
        row = {"K": r.K, "model": r.model_name, "obj": r.objective, "pct_desv": r.pct_desv,
               "n_assets": r.n_assets, "overlap": r.overlap, "l1": r.l1_distance, "sd": r.sd,
               "sd_pct_desv": r.sd_pct_desv, "sr": r.sr}
        if timing:
            row["time"] = r.time_seconds
        rows.append({k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                     for k, v in row.items()})
    return json.dumps(rows, indent=1) + "\n"


def _k_list(ks):
    out = []
    for k in ks or []:
        for part in str(k).split(","):
            if part.strip():
                try:
                    out.append(int(part))
                except ValueError:
                    raise InputError(f"bad K value {part!r}") from None
    if not out:
        raise InputError("no --k given")
    return out


def _engine_list(engine, model_name):
    if not engine:
        return [DEFAULT_ENGINE[model_name]]
    out = []
    for e in engine:
        for part in e.replace("|", ",").split(","):
            part = part.strip()
            if part not in ENGINES:
                raise InputError(f"unknown engine {part!r}")
            if part not in out:
                out.append(part)
    return out


def _per_k(path, K, count):
    p = Path(path)
    return p if count == 1 else p.with_name(f"{p.stem}_K{K}{p.suffix}")


# ---------------------------------------------------------------- adhoc

def run_adhoc(cfg) -> int:
    parts = []
    for src in cfg.paths:
        if src.endswith(".csv"):
            parts.append(factors.read_instance_csv(src))
        else:
            parts.append(factors.fit_single_index(
                data.compute_returns(_read_prices(src), cfg.returns)))
    merged = data.concat_instances(parts)
    adhoc = data.build_adhoc(merged)
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    factors.write_instance_csv(adhoc, out)
    if cfg.scatter_dir:
        d = Path(cfg.scatter_dir)
        d.mkdir(parents=True, exist_ok=True)
        analysis.write_scatter_csv(merged, d / "scatter_original.csv")
        analysis.write_scatter_csv(adhoc, d / "scatter_adhoc.csv")
    print(f"wrote {adhoc.n}-asset instance to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- parsing

def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Keys use flag names."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise InputError(f"{path}:{lineno}: expected key = value")
        out[key.strip().lstrip("-").replace("-", "_")] = val.strip().strip('"').strip("'")
    return out


_LIST_KEYS = ("data", "k", "engine")


def _apply_config(sub, argv, ns):
    """Fill options missing from ``argv`` with values from ``--config``."""
    conf = read_config(ns.config)
    actions = {a.dest: a for a in sub._actions}
    given = set()
    for a in sub._actions:
        for opt in a.option_strings:
            if any(t == opt or t.startswith(opt + "=") for t in argv):
                given.add(a.dest)
    for key, val in conf.items():
        if key == "config":
            continue
        act = actions.get(key)
        if act is None:
            raise InputError(f"unknown config key {key!r}")
        if key in _LIST_KEYS:
            value = [v.strip() for v in val.split(",") if v.strip()]
        elif isinstance(act, argparse._StoreTrueAction):
            value = val.lower() in ("1", "true", "yes", "on")
        else:
            value = act.type(val) if act.type is not None else val
            if act.choices is not None and value not in act.choices:
                raise InputError(f"config {key} = {val!r} is not one of {list(act.choices)}")
        if key not in given:
            setattr(ns, key, value)
    return ns


def build_parser():
    p = argparse.ArgumentParser(prog="ccportfolio",
                                description="Cardinality-constrained minimum-variance portfolios.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sp = p.add_subparsers(dest="command", required=True)

    s = sp.add_parser("solve", help="estimate, build and solve a model")
    s.add_argument("--config", help="key = value file mirroring these flags")
    s.add_argument("--model", choices=MODELS, default="heuristic")
    s.add_argument("--k", action="append", help="cardinality; repeat or comma-separate")
    s.add_argument("--data", action="append",
                   help="indtrack file, instance CSV, dataset name or synthetic[:seed[:n[:T]]]")
    s.add_argument("--engine", action="append", help="brute, bb or heuristic; repeatable")
    s.add_argument("--factor", default="auto", help="single or pca:m (default by model)")
    s.add_argument("--mode", default="two-sided", type=lambda v: MODE_ALIASES.get(v, v),
                   choices=("two-sided", "one-sided"),
                   help="piecewise-linear linkage (paper-faithful is an alias of one-sided)")
    s.add_argument("--n-w", type=int, default=None, help="weight levels (default 4K+1)")
    s.add_argument("--n-beta", type=int, default=500, help="loading breakpoints per factor")
    s.add_argument("--time-limit", type=float, default=3600.0)
    s.add_argument("--node-limit", type=int, default=None)
    s.add_argument("--enum-cap", type=int, default=exact.DEFAULT_CAP)
    s.add_argument("--ref-cap", type=int, default=20000,
                   help="largest C(n, K) for which the exact reference is enumerated")
    s.add_argument("--returns", choices=("simple", "log"), default="simple")
    s.add_argument("--sd-cov", choices=("sample", "implied"), default="sample",
                   help="covariance used for the SD and SR columns")
    s.add_argument("--dims-only", action="store_true", help="print model dimensions only")
    s.add_argument("--format", choices=("csv", "markdown", "json"), default="csv")
    s.add_argument("--out", help="write the report here instead of stdout")
    s.add_argument("--lp-out", help="export the built model in LP format")
    s.add_argument("--trace-out", help="write heuristic traces as CSV")
    s.add_argument("--timing", action="store_true",
                   help="include wall-clock times (output is then not reproducible)")
    s.add_argument("--seed", type=int, default=0, help="recorded for reproducibility")

    v = sp.add_parser("verify", help="run the property checks")
    v.add_argument("--suite", action="append",
                   help="check name (repeatable); default all")
    v.add_argument("--data", help="indtrack file for the data-driven checks")
    v.add_argument("--fixture-dir", help="directory with mini.txt and expected.json")
    v.add_argument("--json", help="write the JSON summary here ('-' for stdout)")

    a = sp.add_parser("adhoc", help="merge datasets into an anti-sorted instance")
    a.add_argument("paths", nargs="+", help="indtrack files or dataset names")
    a.add_argument("--out", default="adhoc.csv")
    a.add_argument("--scatter-dir", help="also write asset scatter CSVs here")
    a.add_argument("--returns", choices=("simple", "log"), default="simple")
    p.solve_parser = s
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if ns.command == "solve":
            if ns.config:
                ns = _apply_config(parser.solve_parser, argv, ns)
            text, code = run_solve(ns)
            if ns.out:
                Path(ns.out).write_text(text)
            else:
                sys.stdout.write(text)
            return code
        if ns.command == "verify":
            from .verify import run_verify
            return run_verify(ns)
        return run_adhoc(ns)
    except (InputError, data.DataError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
