import json
import subprocess
import sys
from pathlib import Path

import pytest

from vekselfund.cli import main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
EXAMPLE_CFG = SCENARIOS / "worked_example.cfg"
EXAMPLE_FIGURES = ("575000.00", "75000.00", "50000.00", "525000.00", "675000.00", "720000.00",
                 "15.0000%", "16.6667%", "-10.0000%", "5.0000%")
WORKED_LOG = (
    "1\tALLOCATE\t50000000\n"
    "2\tISSUE_SERIES\t5000000\t5000000\t1\n"
    "3\tPLEDGE\tL1\t50000000\t1\n"
    "4\tREPAY\tL1\t57500000\t7500000\n"
)
BOOK_HEADER = "loan_id,principal_kopecks,rate_bp,guarantee_bp,collateral_value_kopecks,collateral_coeff_milli,sector\n"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def write(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write


class TestDeal:
    def test_worked_example_figures(self, capsys):
        code, out, _ = run(capsys, "deal", "--config", EXAMPLE_CFG)
        assert code == 0
        for figure in EXAMPLE_FIGURES:
            assert figure in out

    def test_json(self, capsys):
        code, out, _ = run(capsys, "deal", "--config", EXAMPLE_CFG, "--format", "json")
        doc = json.loads(out)
        assert code == 0
        assert doc["total_repayment"] == "575000.00"
        assert doc["market_collateral"] == {"1.5": "675000.00", "1.6": "720000.00"}
        assert doc["default"]["consolidated_yield_percent"] == "5.0000"
        assert doc["yield_bounds"]["municipal_convention_percent"] == ["-10.0000", "16.6667"]

    def test_zero_rate(self, capsys, write):
        cfg = write("z.cfg", "principal = 500000\nrate_percent = 0\nguarantee_percent = 10\n")
        code, out, _ = run(capsys, "deal", "--config", cfg, "--format", "json")
        assert code == 0
        assert json.loads(out)["interest_due"] == "0.00"

    def test_rate_equal_to_guarantee(self, capsys, write):
        cfg = write("k.cfg", "principal = 500000\nrate_percent = 10\nguarantee_percent = 10\n")
        code, out, _ = run(capsys, "deal", "--config", cfg, "--format", "json")
        assert code == 0
        assert json.loads(out)["default"]["consolidated_yield_percent"] == "0.0000"

    def test_missing_config(self, capsys):
        code, _, err = run(capsys, "deal")
        assert code == 2 and "--config" in err

    def test_invalid_config(self, capsys, write):
        cfg = write("bad.cfg", "principal = 500000\nrate_percent = abc\nguarantee_percent = 10\n")
        code, _, err = run(capsys, "deal", "--config", cfg)
        assert code == 2 and "line 2" in err

    def test_unreadable_config(self, capsys, tmp_path):
        assert run(capsys, "deal", "--config", tmp_path / "nope.cfg")[0] == 2


class TestPortfolio:
    def test_worked_example(self, capsys):
        code, out, _ = run(capsys, "portfolio", "--config", EXAMPLE_CFG)
        assert code == 0
        for figure in ("13.0435%", "21.7391%", "[-10.0000%, 16.6667%]", "3.5000%"):
            assert figure in out

    def test_zero_rate(self, capsys, write):
        cfg = write("z.cfg", "principal = 1\nrate_percent = 0\nguarantee_percent = 10\n")
        code, out, _ = run(capsys, "portfolio", "--config", cfg, "--format", "json")
        assert code == 0 and json.loads(out)["break_even_default_percent"] == "0.0000"

    def test_tier(self, capsys, write):
        cfg = write(
            "t.cfg",
            "principal = 1\nrate_percent = 15\nguarantee_percent = 10\nsector = agri\n"
            "default_prob_percent = 5\ntier_discount_percent = 3\n",
        )
        code, out, _ = run(capsys, "portfolio", "--config", cfg, "--format", "json")
        assert code == 0
        assert json.loads(out)["tier"]["rate_percent"] == "12.0000"


class TestSolveRate:
    @pytest.mark.parametrize(
        "forecast, target, rate",
        [("13.0435", "0", "15.0000"), ("0", "0", "0.0000"), ("21.7391", "-10", "15.0000"), ("3/23", "0", "15.0000")],
    )
    def test_examples(self, capsys, forecast, target, rate):
        code, out, _ = run(capsys, "solve-rate", "--forecast-default", forecast, "--target-yield", target,
                           "--format", "json")
        assert code == 0
        assert json.loads(out)["rate_percent"] == rate

    def test_exact_round_trip(self, capsys):
        _, out, _ = run(capsys, "solve-rate", "--forecast-default", "5/23", "--target-yield", "-10", "--format", "json")
        doc = json.loads(out)
        assert doc["rate_exact"] == "3/20"
        assert doc["verification_yield_percent"] == "-10.0000"

    @pytest.mark.parametrize("forecast, target", [("100", "0"), ("50", "-60")])
    def test_infeasible(self, capsys, forecast, target):
        code, _, err = run(capsys, "solve-rate", "--forecast-default", forecast, "--target-yield", target)
        assert code == 3 and err.startswith("error:")

    def test_bad_number(self, capsys):
        assert run(capsys, "solve-rate", "--forecast-default", "ten", "--target-yield", "0")[0] == 2


class TestSimulate:
    def test_json_schema_and_stability(self, capsys):
        argv = ("simulate", "--config", EXAMPLE_CFG, "--trials", "5", "--format", "json")
        first = run(capsys, *argv)[1]
        second = run(capsys, *argv)[1]
        assert first == second
        doc = json.loads(first)
        assert list(doc) == [
            "mean_fund_yield_bp", "mean_consolidated_yield_bp", "std_error_bp", "quantiles_bp",
            "municipal_loss_bp", "fraction_below_guarantee_ppm", "trials", "total_loans", "seed", "config_digest",
        ]
        assert doc["seed"] == 42 and doc["trials"] == 5 and doc["total_loans"] == 50_000

    def test_worked_example_oracle(self, capsys):
        code, out, _ = run(capsys, "simulate", "--config", EXAMPLE_CFG, "--format", "json")
        doc = json.loads(out)
        assert code == 0
        assert abs(doc["mean_consolidated_yield_bp"] - 350) < 3 * doc["std_error_bp"]

    def test_seed_flag(self, capsys):
        a = json.loads(run(capsys, "simulate", "--config", EXAMPLE_CFG, "--trials", "2", "--format", "json")[1])
        b = json.loads(run(capsys, "simulate", "--config", EXAMPLE_CFG, "--trials", "2", "--seed", "7",
                           "--format", "json")[1])
        assert b["seed"] == 7 and a["config_digest"] == b["config_digest"]
        assert a["mean_consolidated_yield_bp"] != b["mean_consolidated_yield_bp"]

    def test_text(self, capsys):
        code, out, _ = run(capsys, "simulate", "--config", EXAMPLE_CFG, "--trials", "1")
        assert code == 0 and "mean consolidated yield" in out

    def test_book(self, capsys, write):
        rows = "".join(f"L{i},50000000,1500,1000,0,1000,general\n" for i in range(200))
        book = write("book.csv", BOOK_HEADER + rows)
        code, out, _ = run(capsys, "simulate", "--book", book, "--default-prob", "0", "--format", "json")
        assert code == 0
        assert json.loads(out)["mean_consolidated_yield_bp"] == 1500.0

    def test_malformed_book(self, capsys, write):
        book = write("book.csv", BOOK_HEADER + "L1,50000000,15%,1000,0,1000,general\n")
        code, _, err = run(capsys, "simulate", "--book", book, "--default-prob", "10")
        assert code == 2
        assert "row 2" in err and "rate_bp" in err

    @pytest.mark.parametrize("seed", ["-1", str(1 << 64), "x"])
    def test_bad_seed(self, capsys, seed):
        assert run(capsys, "simulate", "--config", EXAMPLE_CFG, "--seed", seed)[0] == 2

    def test_needs_input(self, capsys):
        assert run(capsys, "simulate")[0] == 2


class TestLedger:
    def test_worked_log(self, capsys, write):
        log = write("fund.log", WORKED_LOG)
        code, out, _ = run(capsys, "ledger", "replay", log, "--format", "json")
        doc = json.loads(out)
        assert code == 0
        assert doc["interest_income"] == "75000.00"
        assert doc["notes"]["returned"] == {"count": 1, "face": "50000.00"}

    def test_empty_log(self, capsys, write):
        code, out, _ = run(capsys, "ledger", "replay", write("empty.log", ""), "--format", "json")
        doc = json.loads(out)
        assert code == 0 and doc["cash"] == "0.00" and doc["last_seq"] == 0

    def test_double_settlement(self, capsys, write):
        log = write("fund.log", WORKED_LOG + "5\tREPAY\tL1\t57500000\t7500000\n")
        code, _, err = run(capsys, "ledger", "replay", log)
        assert code == 4 and "seq 5" in err

    def test_apply(self, capsys, write, tmp_path):
        log = tmp_path / "new.log"
        head, tail = WORKED_LOG.splitlines(keepends=True)[:2], WORKED_LOG.splitlines(keepends=True)[2:]
        assert run(capsys, "ledger", "apply", log, "--events", write("a.ev", "".join(head)))[0] == 0
        assert run(capsys, "ledger", "apply", log, "--events", write("b.ev", "".join(tail)))[0] == 0
        assert log.read_text() == WORKED_LOG

    def test_rejected_apply_leaves_file(self, capsys, write):
        log = write("fund.log", WORKED_LOG)
        events = write("bad.ev", "5\tDEFAULT\tL1\t0\n")
        assert run(capsys, "ledger", "apply", log, "--events", events)[0] == 4
        assert log.read_text() == WORKED_LOG

    def test_malformed_log(self, capsys, write):
        assert run(capsys, "ledger", "replay", write("x.log", "1 ALLOCATE 5\n"))[0] == 2

    def test_apply_needs_events(self, capsys, write):
        assert run(capsys, "ledger", "apply", write("fund.log", WORKED_LOG))[0] == 2


def test_usage_errors(capsys):
    assert run(capsys)[0] == 2
    assert run(capsys, "deal", "--format", "xml", "--config", EXAMPLE_CFG)[0] == 2


def test_module_entry_point_is_byte_stable():
    argv = [sys.executable, "-m", "vekselfund", "deal", "--config", str(EXAMPLE_CFG), "--format=json"]
    first = subprocess.run(argv, capture_output=True, check=True).stdout
    second = subprocess.run(argv, capture_output=True, check=True).stdout
    assert first == second and first.endswith(b"}\n")
