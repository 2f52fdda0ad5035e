from __future__ import annotations

import json
import re
from pathlib import Path

import pytest

from arbforge.cli import main

SC = Path(__file__).resolve().parents[1] / "scenarios"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_price_bm_zero(capsys, tmp_path):
    code, out, _ = run(capsys, "price", "--scenario", SC / "bm_zero_T1.json", "--json", tmp_path / "r.json")
    assert code == 0
    assert "0.6826895" in out and "1.464795" in out and "exact_closed_form" in out
    assert json.loads((tmp_path / "r.json").read_text())["price_or_bound"] == pytest.approx(0.6826895, abs=1e-7)


def test_price_short_poisson_is_validation_error(capsys):
    code, _, err = run(capsys, "price", "--scenario", SC / "poisson_T05.json")
    assert code == 2
    assert "T > 1" in err


def test_price_bubble_bound(capsys):
    code, out, _ = run(capsys, "price", "--scenario", SC / "bubble_K2_eps05.json")
    assert code == 0 and "0.75" in out and "upper_bound" in out


def test_price_poisson_prints_se_and_bound(capsys):
    code, out, _ = run(capsys, "price", "--scenario", SC / "poisson_T2.json", "--paths", "20000")
    assert code == 0
    row = [l for l in out.splitlines() if l.startswith("poisson_T2")][0]
    price, U, se = (float(x) for x in row.split()[1:4])
    assert se > 0 and U == pytest.approx(1 / price, rel=1e-6)
    assert "0.5939942" in out


def _hash(out):
    return re.search(r"output sha256: ([0-9a-f]{64})", out).group(1)


def test_simulate_p_direct_and_reproducible(capsys, tmp_path):
    args = ["simulate", "--scenario", SC / "bm_zero_T1.json", "--measure", "p", "--paths", "300"]
    code, out1, _ = run(capsys, *args, "--out", tmp_path / "a.csv")
    assert code == 0 and "all paths survive: true" in out1
    code, out2, _ = run(capsys, "--threads", "2", *args, "--out", tmp_path / "b.csv")
    assert _hash(out1) == _hash(out2)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_simulate_weighted_mean(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "--scenario", SC / "poisson_T2.json", "--measure", "p-weighted",
                       "--paths", "20000", "--out", tmp_path / "w.csv")
    assert code == 0
    m, se = map(float, re.search(r"mean weight: (\S+) \+/- (\S+)", out).groups())
    assert abs(m - 1) <= 3 * se


def test_simulate_cache(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("ARBFORGE_CACHE_DIR", str(tmp_path / "cache"))
    code, out, _ = run(capsys, "simulate", "--scenario", SC / "poisson_T2.json", "--paths", "100",
                       "--out", tmp_path / "q.csv", "--cache")
    assert code == 0 and list((tmp_path / "cache").glob("*.npz"))


def test_verify_kernels(capsys):
    for name in ("bm_zero_T1", "bm_line_a1_T1", "poisson_T2"):
        code, out, _ = run(capsys, "verify", "--scenario", SC / f"{name}.json", "--suite", "kernels")
        assert code == 0 and "FAIL" not in out


def test_verify_crossval_poisson(capsys):
    code, out, _ = run(capsys, "verify", "--scenario", SC / "poisson_T2.json", "--suite", "crossval", "--paths", "20000")
    assert code == 0
    zs = [abs(float(z)) for z in re.findall(r"z = ([-+0-9.]+)", out)]
    assert len(zs) == 5 and max(zs) <= 3


def test_verify_hedge(capsys):
    code, out, _ = run(capsys, "verify", "--scenario", SC / "bm_zero_T1.json", "--suite", "hedge", "--paths", "400")
    assert code == 0, out


def test_verify_superhedge_volbet(capsys):
    code, out, _ = run(capsys, "verify", "--scenario", SC / "volbet_lo1_T1.json", "--suite", "superhedge",
                       "--paths", "5000")
    assert code == 0, out


def test_verify_unsupported_suite_is_validation_error(capsys):
    code, _, err = run(capsys, "verify", "--scenario", SC / "bubble_K2_eps05.json", "--suite", "kernels")
    assert code == 2 and "error" in err


def test_fragility_commands(capsys, tmp_path):
    code, out, _ = run(capsys, "fragility", "--scenario", SC / "bm_line_a2_T1.json", "--strategy", "buy_hold",
                       "--paths", "300", "--out-dir", tmp_path)
    assert code == 0 and "verdict: operationally_robust" in out
    code, out, _ = run(capsys, "fragility", "--scenario", SC / "poisson_T2.json", "--strategy", "buy_hold",
                       "--paths", "2000", "--out-dir", tmp_path, "--mode", "adversarial-toward-boundary")
    assert code == 0 and "verdict: operationally_robust" in out
    code, out, _ = run(capsys, "fragility", "--scenario", SC / "bm_zero_T1.json", "--strategy", "delta_hedge",
                       "--paths", "200", "--kappa", "0,1e-2", "--eps", "0", "--out-dir", tmp_path)
    assert code == 0
    heat = tmp_path / "fragility-bm_zero_T1-delta_hedge-vt_min.csv"
    assert heat.exists() and heat.read_text().startswith("kappa\\epsilon,")


def test_fragility_incompatible_strategy(capsys, tmp_path):
    code, _, _ = run(capsys, "fragility", "--scenario", SC / "poisson_T2.json", "--strategy", "delta_hedge",
                     "--out-dir", tmp_path)
    assert code == 2


def test_report_table(capsys, tmp_path):
    files = [SC / f"{n}.json" for n in ("bm_zero_T1", "bm_line_a1_T1", "incomplete_line_a4_T1", "bracket_a1_b2_T1")]
    code, out, _ = run(capsys, "report", "--scenario", *files, "--json", tmp_path / "t.json")
    assert code == 0
    assert len(json.loads((tmp_path / "t.json").read_text())) == 4
    assert "0.5" in out and "0.331898" in out


def test_bad_scenario_files(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": 1, "model": {"type": "arithmetic_bm"}, "stopping": {"type": "hit_zero"},
                               "T": 1, "extra": 1}))
    code, _, err = run(capsys, "price", "--scenario", bad)
    assert code == 2 and "unknown scenario fields" in err
    bad.write_text("{not json")
    assert run(capsys, "price", "--scenario", bad)[0] == 2
    assert run(capsys, "price", "--scenario", tmp_path / "missing.json")[0] == 2
    bad.write_text(json.dumps({"model": {"type": "arithmetic_bm"}, "stopping": {"type": "hit_line", "alpha": -1},
                               "T": 1}))
    code, _, err = run(capsys, "price", "--scenario", bad)
    assert code == 2 and "alpha > 0" in err
