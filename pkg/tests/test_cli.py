import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from ccportfolio import cli, data, factors
from ccportfolio.metrics import parse_csv

from conftest import random_sf

SYN = "synthetic:1:20:60"


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return {r.model_name: r for r in parse_csv(text)}


def test_engines_agree(capsys):
    code, out, _ = run(capsys, "solve", "--model", "ewccmvsf", "--k", "4", "--data", SYN,
                       "--engine", "brute|bb|heuristic")
    assert code == cli.EXIT_OK
    r = rows(out)
    assert set(r) == {"CCMVSF (exact)", "EWCCMVSF [brute]", "EWCCMVSF [bb]", "Alg1 [heuristic]"}
    assert r["EWCCMVSF [bb]"].objective == r["EWCCMVSF [brute]"].objective
    assert r["EWCCMVSF [bb]"].K_reported == r["EWCCMVSF [brute]"].K_reported
    assert r["CCMVSF (exact)"].pct_desv == 0.0
    assert r["EWCCMVSF [brute]"].pct_desv >= 0


def test_bb_matches_brute_objectives():
    inst = cli.load_instance([SYN], ("single", 1))
    cfg = cli.build_parser().parse_args(["solve"])
    cov = factors.implied_covariance(inst.model)
    for K in (1, 2, 5, 9):
        a = cli.solve_one("ewccmvsf", "brute", inst, K, cfg)
        b = cli.solve_one("ewccmvsf", "bb", inst, K, cfg)
        assert a.weights @ cov @ a.weights == pytest.approx(b.weights @ cov @ b.weights, abs=1e-9)


def test_dims_only_one_sided_mode(capsys):
    code, out, _ = run(capsys, "solve", "--model", "ccmvfm-la", "--k", "50", "--data",
                       "indtrack8", "--mode", "paper-faithful", "--dims-only")
    assert code == 0
    assert out.strip() == "CCMVFM_LA K=50 N=2151 NF=4 n01=434351 nc=0 m=2161"
    code, out, _ = run(capsys, "solve", "--model", "ewccmvfm-la", "--k", "50", "--data",
                       "indtrack8", "--dims-only", "--format", "json")
    rep = json.loads(out)
    assert (rep["n01"], rep["m"]) == (4151, 14)  # two-sided: one extra row per factor


def test_heuristic_shrinks_cardinality(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    code, out, _ = run(capsys, "solve", "--model", "heuristic", "--k", "20", "--data",
                       "indtrack5", "--trace-out", trace)
    assert code == 0
    r = rows(out)["Alg1+Alg2"]
    assert r.K == 20 and r.n_assets < 20
    assert trace.read_text().startswith("iter,removed,inserted,objective")


def test_multi_factor_models(capsys, tmp_path):
    lp_out = tmp_path / "m.lp"
    code, out, _ = run(capsys, "solve", "--model", "ewccmvfm", "--k", "2,3", "--data",
                       "synthetic:2:9:40", "--factor", "pca:2", "--lp-out", lp_out)
    assert code == 0
    assert [r.K for r in parse_csv(out)] == [2, 2, 3, 3]
    assert (tmp_path / "m_K2.lp").exists() and (tmp_path / "m_K3.lp").exists()
    code, out, _ = run(capsys, "solve", "--model", "mewcp", "--k", "3", "--data",
                       "synthetic:2:9:40", "--factor", "pca:2")
    code2, out2, _ = run(capsys, "solve", "--model", "ewccmvfm", "--k", "3", "--data",
                         "synthetic:2:9:40", "--factor", "pca:2")
    assert rows(out)["MEWCP"].objective == rows(out2)["EWCCMVFM"].objective


def test_la_and_ccmv_pipeline(capsys):
    code, out, _ = run(capsys, "solve", "--model", "ccmvfm", "--k", "3", "--data",
                       "synthetic:4:8:40", "--factor", "single")
    assert code == 0
    r = rows(out)
    assert r["CCMVSF"].objective == r["CCMVSF (exact)"].objective
    code, out, _ = run(capsys, "solve", "--model", "ewccmvfm-la", "--k", "3", "--data",
                       "synthetic:4:8:40", "--factor", "single", "--n-beta", "100")
    assert code == 0 and "EWCCMVSF_LA" in out


def test_markdown_and_json_formats(capsys):
    code, out, _ = run(capsys, "solve", "--model", "ewccmvsf", "--k", "3", "--data", SYN,
                       "--format", "markdown", "--sd-cov", "implied")
    assert out.startswith("| K | model |") and "factor-implied covariance" in out
    code, out, _ = run(capsys, "solve", "--model", "ewccmvsf", "--k", "3", "--data", SYN,
                       "--format", "json", "--timing")
    recs = json.loads(out)
    assert recs[0]["model"] == "CCMVSF (exact)" and "time" in recs[0]


def test_deterministic_output(capsys, tmp_path):
    argv = ["solve", "--model", "ewccmvsf", "--k", "3,4", "--data", SYN,
            "--engine", "brute,bb,heuristic"]
    outs = []
    for i in range(2):
        p = tmp_path / f"r{i}.csv"
        assert cli.main(argv + ["--out", str(p)]) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_config_file_and_override(capsys, tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text(f"# comment\nmodel = ewccmvsf\nk = 3\ndata = {SYN}\nengine = brute\n")
    code, out, _ = run(capsys, "solve", "--config", conf)
    assert code == 0 and [r.K for r in parse_csv(out)] == [3, 3]
    code, out, _ = run(capsys, "solve", "--config", conf, "--k", "5")
    assert code == 0 and [r.K for r in parse_csv(out)] == [5, 5]
    conf.write_text("colour = blue\n")
    assert run(capsys, "solve", "--config", conf)[0] == cli.EXIT_INPUT
    conf.write_text("model = nosuch\n")
    assert run(capsys, "solve", "--config", conf)[0] == cli.EXIT_INPUT
    conf.write_text("just words\n")
    assert run(capsys, "solve", "--config", conf)[0] == cli.EXIT_INPUT


@pytest.mark.parametrize("argv", [
    ["solve", "--model", "ewccmvsf", "--k", "3", "--data", "missing.txt"],
    ["solve", "--model", "ewccmvsf", "--k", "30", "--data", SYN],
    ["solve", "--model", "ewccmvsf", "--k", "x", "--data", SYN],
    ["solve", "--model", "ewccmvsf", "--data", SYN],
    ["solve", "--model", "ewccmvsf", "--k", "3", "--data", SYN, "--engine", "cplex"],
    ["solve", "--model", "ewccmvsf", "--k", "3", "--data", SYN, "--factor", "pca:2"],
    ["solve", "--model", "ewccmvsf", "--k", "3", "--data", SYN, "--factor", "pca:x"],
    ["solve", "--model", "ccmvfm", "--k", "3", "--data", SYN, "--engine", "heuristic"],
    ["solve", "--model", "bogus"],
    ["frobnicate"],
])
def test_input_errors(capsys, argv):
    assert run(capsys, *argv)[0] == cli.EXIT_INPUT


def test_corrupt_price_file(capsys, tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("2  10 5")
    code, _, err = run(capsys, "solve", "--k", "1", "--data", p)
    assert code == cli.EXIT_INPUT and "N=2" in err


def test_enumeration_cap(capsys, caplog):
    code, _, _ = run(capsys, "solve", "--model", "ewccmvsf", "--k", "5", "--data", SYN,
                     "--engine", "brute", "--enum-cap", "10")
    assert code == cli.EXIT_LIMIT_NO_INCUMBENT and "cap is 10" in caplog.text


def test_node_limit_with_incumbent(capsys, caplog, tmp_path):
    p = tmp_path / "inst.csv"
    factors.write_instance_csv(random_sf(np.random.default_rng(13), 14), p)
    base = ["solve", "--model", "ewccmvfm-la", "--k", "5", "--data", p, "--n-beta", "60"]
    code, out, _ = run(capsys, *base, "--node-limit", "18")
    assert code == cli.EXIT_LIMIT and "feasible-at-limit" in caplog.text
    assert "EWCCMVSF_LA" in out
    assert run(capsys, *base)[0] == cli.EXIT_OK


def test_adhoc_round_trip(capsys, tmp_path, data_dir):
    out = tmp_path / "adhoc.csv"
    code, msg, _ = run(capsys, "adhoc", data_dir / "mini_indtrack.txt", "synthetic:3:8:40",
                       "--out", out, "--scatter-dir", tmp_path / "sc")
    assert code == 0 and "20-asset" in msg
    inst = factors.read_instance_csv(out)
    assert inst.n == 20 and np.all(np.diff(inst.beta) >= 0)
    assert np.all(np.diff(inst.sigma_eps2) <= 0)
    assert (tmp_path / "sc" / "scatter_original.csv").exists()
    assert (tmp_path / "sc" / "scatter_adhoc.csv").exists()
    code, rep, _ = run(capsys, "solve", "--model", "heuristic", "--k", "4", "--data", out)
    assert code == 0 and "Alg1+Alg2" in rep


def test_adhoc_single_source(capsys, tmp_path, data_dir):
    out = tmp_path / "one.csv"
    assert run(capsys, "adhoc", data_dir / "mini_indtrack.txt", "--out", out)[0] == 0
    orig = factors.fit_single_index(data.compute_returns(
        data.read_indtrack(data_dir / "mini_indtrack.txt")))
    got = factors.read_instance_csv(out)
    np.testing.assert_allclose(got.beta, np.sort(orig.beta))
    np.testing.assert_allclose(got.sigma_eps2, np.sort(orig.sigma_eps2)[::-1])


def test_verify_fixture_and_json(capsys, tmp_path):
    js = tmp_path / "v.json"
    code, out, _ = run(capsys, "verify", "--suite", "fixture,embedding", "--json", js)
    assert code == 0
    assert out.startswith("PASS fixture") and "PASS embedding" in out
    summary = json.loads(js.read_text())
    assert summary["passed"] and [c["name"] for c in summary["checks"]] == ["fixture", "embedding"]


def test_verify_detects_corrupted_fixture(capsys, tmp_path):
    from importlib import resources
    src = resources.files("ccportfolio") / "fixtures"
    for name in ("mini.txt", "expected.json"):
        (tmp_path / name).write_text((src / name).read_text())
    exp = json.loads((tmp_path / "expected.json").read_text())
    exp["ew_K3_objective"] *= 1.001
    (tmp_path / "expected.json").write_text(json.dumps(exp))
    code, out, _ = run(capsys, "verify", "--suite", "fixture", "--fixture-dir", tmp_path)
    assert code == cli.EXIT_VERIFY
    assert out.startswith("FAIL fixture") and "ew_K3_objective" in out


def test_verify_monge_on_data_file(capsys, data_dir):
    code, out, _ = run(capsys, "verify", "--suite", "monge", "--data",
                       data_dir / "mini_indtrack.txt")
    assert code == 0 and out.startswith("PASS monge") and "worst" in out


def test_verify_unknown_suite(capsys):
    assert run(capsys, "verify", "--suite", "nope")[0] == cli.EXIT_INPUT


def test_module_entry_point():
    exe = shutil.which("ccportfolio")
    cmd = [exe] if exe else [sys.executable, "-m", "ccportfolio"]
    res = subprocess.run(cmd + ["solve", "--model", "ewccmvsf", "--k", "2", "--data", SYN],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("K,model,obj")
