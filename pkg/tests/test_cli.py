from __future__ import annotations

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from idecomp.cli import DEMO_DIR, DEMOS, main, run_demo

COUNTER = str(DEMO_DIR / "sec43.cfg")
FA = str(DEMO_DIR / "sec45.cfg")
INDEP = str(DEMO_DIR / "indep3.cfg")


def read_term(path):
    rows = list(csv.reader(open(path)))
    return rows[0], [[float(v) for v in r] for r in rows[1:]]


@pytest.fixture
def dataset(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 3))
    y = X[:, 0] * X[:, 1] + X[:, 2]
    np.savetxt(tmp_path / "data.csv", np.c_[X, y], delimiter=",", header="x1,x2,x3,y", comments="")
    (tmp_path / "data.cfg").write_text("data = data.csv\nbins = 5\n")
    return tmp_path / "data.cfg"


class TestDecompose:
    def test_naive_counterexample(self, tmp_path):
        code = main(["decompose", "--f", "x1*x2*x3", "--space", COUNTER, "--method", "pd-naive",
                     "--max-order", "2", "--out", str(tmp_path)])
        assert code == 0
        header, rows = read_term(tmp_path / "term_1_3.csv")
        assert header == ["x1", "x3", "value"]
        assert all(v == -x3 for _, x3, v in rows)

    def test_additive_pair_is_zero(self, tmp_path):
        assert main(["decompose", "--f", "x1+x2", "--space", FA, "--method", "pd-proper",
                     "--out", str(tmp_path)]) == 0
        _, rows = read_term(tmp_path / "term_1_2.csv")
        assert rows and all(r[-1] == 0.0 for r in rows)

    def test_bare_demo_config_name(self, tmp_path):
        assert main(["decompose", "--f", "x1", "--space", "sec45.cfg", "--out", str(tmp_path)]) == 0

    def test_binned_order_limit(self, dataset, tmp_path, capsys):
        code = main(["decompose", "--space", str(dataset), "--method", "ale", "--max-order", "3",
                     "--out", str(tmp_path)])
        assert code == 2
        assert "order 2" in capsys.readouterr().err

    def test_black_box_rejected(self, dataset, tmp_path, capsys):
        assert main(["decompose", "--space", str(dataset), "--method", "rp",
                     "--out", str(tmp_path)]) == 2
        assert "black-box" in capsys.readouterr().err

    def test_black_box_fanova(self, dataset, tmp_path):
        assert main(["decompose", "--space", str(dataset), "--method", "fanova",
                     "--max-order", "1", "--out", str(tmp_path)]) == 0
        meta = json.loads((tmp_path / "summary.json").read_text())
        assert meta["backend"] == "sample" and meta["n"] == 200

    @pytest.mark.parametrize("args", [
        ["--f", "x1 +", "--space", COUNTER],
        ["--f", "x4", "--space", COUNTER],
        ["--f", "x1", "--space", COUNTER, "--method", "shap"],
        ["--f", "x1", "--space", COUNTER, "--max-order", "4"],
        ["--f", "x1", "--space", "missing.cfg"],
        ["--f", "log(x1)", "--space", COUNTER],
        ["--space", COUNTER],
    ])
    def test_input_errors(self, args, tmp_path):
        assert main(["decompose", *args, "--out", str(tmp_path)]) == 2

    def test_deterministic(self, tmp_path):
        for k in "ab":
            main(["decompose", "--f", "x1*x2 + exp(x3)", "--space", INDEP, "--method", "ce:rep=median",
                  "--seed", "4", "--out", str(tmp_path / k)])
        for p in (tmp_path / "a").iterdir():
            assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


class TestCheck:
    def test_pd_proper_id(self, capsys):
        assert main(["check", "--f", "x1*x2*x3", "--space", INDEP, "--method", "pd-proper",
                     "--expect-id"]) == 0
        assert "expectations met" in capsys.readouterr().out

    def test_pd_proper_id_dependent(self):
        # P6 cannot be checked on a dependent space; it is reported, not failed
        assert main(["check", "--f", "x1*x2*x3", "--space", COUNTER, "--method", "pd-proper",
                     "--expect-id"]) == 0

    def test_naive_expected_failures(self):
        assert main(["check", "--f", "x1*x2*x3", "--space", COUNTER, "--method", "pd-naive",
                     "--expect-failures", "P4,P5"]) == 0

    def test_naive_id_unmet(self, capsys):
        assert main(["check", "--f", "x1*x2*x3", "--space", COUNTER, "--method", "pd-naive",
                     "--expect-p1-p5"]) == 1
        assert "UNMET: P4" in capsys.readouterr().out

    def test_rp_not_an_id(self):
        assert main(["check", "--f", "x1*x2", "--space", INDEP, "--method", "rp",
                     "--expect-id"]) == 1

    def test_rp_p1_p5(self):
        assert main(["check", "--f", "x1*x2", "--space", INDEP, "--method", "rp",
                     "--expect-p1-p5"]) == 0

    def test_default_expectation_is_profile(self):
        assert main(["check", "--f", "x1+x2", "--space", FA, "--method", "fanova"]) == 0

    def test_expected_failure_not_confirmed(self):
        assert main(["check", "--f", "x1", "--space", INDEP, "--method", "pd-proper",
                     "--expect-failures", "P4"]) == 1

    def test_unknown_property(self):
        assert main(["check", "--f", "x1", "--space", INDEP, "--expect-failures", "P9"]) == 2

    def test_json_report_and_random_battery(self, tmp_path):
        out = tmp_path / "r" / "report.json"
        assert main(["check", "--f", "x1*x2", "--space", INDEP, "--method", "ce", "--battery",
                     "none", "--random", "3", "--json", str(out)]) == 0
        data = json.loads(out.read_text())
        assert data["settings"]["cases"] == ["input", "poly00", "poly01", "poly02"]

    def test_black_box_check(self, dataset):
        assert main(["check", "--space", str(dataset), "--method", "fanova", "--battery", "none",
                     "--max-order", "1"]) == 0


class TestHstat:
    def test_product(self, tmp_path, capsys):
        assert main(["hstat", "--f", "x1*x2", "--space", FA,
                     "--out", str(tmp_path)]) == 0
        rows = list(csv.reader(open(tmp_path / "h2.csv")))
        assert rows[1][2] != ""

    def test_rademacher_product(self, tmp_path):
        cfg = tmp_path / "rad.cfg"
        cfg.write_text("mode = exact\nlatent = rademacher; rademacher\nA = 1 0; 0 1\n")
        assert main(["hstat", "--f", "x1*x2", "--space", str(cfg), "--out", str(tmp_path)]) == 0
        rows = list(csv.reader(open(tmp_path / "h2.csv")))
        assert float(rows[1][2]) == 1.0

    def test_additive(self, tmp_path):
        assert main(["hstat", "--f", "x1 + x2 + x3", "--space", INDEP, "--out", str(tmp_path)]) == 0
        data = json.loads((tmp_path / "hstat.json").read_text())
        assert all(v in (None, 0.0) for row in data["h2"] for v in row)

    def test_missing_space(self, tmp_path):
        assert main(["hstat", "--f", "x1*x2", "--space", "nope.cfg", "--out", str(tmp_path)]) == 2

    def test_black_box(self, dataset, tmp_path):
        assert main(["hstat", "--space", str(dataset), "--out", str(tmp_path)]) == 2


class TestDemos:
    def test_all_pass(self, tmp_path, capsys):
        assert main(["demos", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        for name in DEMOS:
            assert f"PASS  {name}" in out
        bundle = json.loads((tmp_path / "demos.json").read_text())
        assert [b["name"] for b in bundle] == list(DEMOS)

    def test_single_and_list(self, capsys):
        assert main(["demos", "sec45-fanova"]) == 0
        assert main(["demos", "--list"]) == 0
        assert "prop2-linear" in capsys.readouterr().out

    def test_unknown(self):
        assert main(["demos", "nope"]) == 2

    def test_golden_contents(self):
        res = run_demo("sec43-counterexample")
        pd3 = [c for c in res["checks"] if c["kind"] == "pd" and c["J"] == [3]][0]
        assert pd3["expected"] == "x3" and pd3["ok"]
        naive13 = [c for c in res["checks"] if c["kind"] == "term" and c["J"] == [1, 3]]
        assert naive13[0]["expected"] == "-x3" and naive13[0]["ok"]
        fa = run_demo("sec45-fanova")["checks"][0]
        assert fa["expected"] == "2*x1" and fa["ok"]

    def test_detects_mismatch(self, tmp_path, monkeypatch):
        import idecomp.cli as cli
        spec = json.loads((DEMO_DIR / "sec45-fanova.json").read_text())
        spec["checks"][0]["expected"] = "x1"
        for cfg in DEMO_DIR.glob("*.cfg"):
            (tmp_path / cfg.name).write_text(cfg.read_text())
        (tmp_path / "sec45-fanova.json").write_text(json.dumps(spec))
        monkeypatch.setattr(cli, "DEMO_DIR", tmp_path)
        assert main(["demos", "sec45-fanova"]) == 1


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "idecomp", "demos", "--list"],
                         capture_output=True, text=True, check=True)
    assert "sec43-counterexample" in out.stdout


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["decompose"])
    assert info.value.code == 2
