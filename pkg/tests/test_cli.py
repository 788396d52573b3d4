import json

import pytest

from repomech.cli import main
from repomech.generate import generate_book
from repomech.reports import data_path
from repomech.trade_model import parse_book_csv, validate_book


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.delenv("REPOMECH_OUTPUT_DIR", raising=False)
    return tmp_path / "out"


def test_run_reproduces_worked_example(out, capsys):
    assert main(["run", "--input", str(data_path("table1.csv")),
                 "--policy", f"explicit:{data_path('example_assignment.json')}", "--out-dir", str(out)]) == 0
    dec = json.loads((out / "decomposition.json").read_text())
    assert len(dec["chains"]) == 7 and len(dec["cycles"]) == 1
    c7 = [c for c in dec["chains"] if c["id"] == "C7"][0]
    assert [e["m2"] for e in c7["edges"]] == ["13.0600", "10.2400", "6.0000", "13.0600"]
    contracts = {c["structure"]: c for c in json.loads((out / "contracts.json").read_text())}
    assert {o["node"]: o["m_net"] for o in contracts["Y1"]["obligations"]} == {
        "BT_f": "2.8200", "BT_i": "4.2400", "BT_g": "-7.0600"}
    assert "C7    MM_g" in capsys.readouterr().out


def test_default_sim_scenario(capsys):
    assert main(["default-sim", "--scenario", str(data_path("chain7_bti.json"))]) == 0
    text = capsys.readouterr().out
    assert "new   C7a" in text and "new   C7b" in text and "trade C7c" in text and "unit price 5.1200" in text


def test_empty_book(tmp_path, out):
    p = tmp_path / "empty.csv"
    p.write_text("")
    assert main(["run", "--input", str(p), "--out-dir", str(out)]) == 0
    assert json.loads((out / "decomposition.json").read_text()) == {"chains": [], "cycles": []}
    assert json.loads((out / "netted.json").read_text())["edges"] == []


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("REPOMECH_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["net"]) == 0
    assert (tmp_path / "env" / "netted.json").exists()


def test_validation_failure_exit_1(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("trade_id,lender,borrower,first_leg_price,second_leg_price,quantity\n1,a,a,1,1,1\n")
    assert main(["validate", "--input", str(p)]) == 1
    assert "lender and borrower" in capsys.readouterr().err


def test_bad_assignment_exit_1(tmp_path):
    p = tmp_path / "a.json"
    p.write_text('{"excess": {"k": [{"source": "k", "target": "g", "qty": 1}]}}')
    assert main(["split", "--policy", f"explicit:{p}"]) == 1


def test_invalid_event_exit_1(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"events": [{"structure": "C7", "node": "RM_f", "object": "T"}]}')
    assert main(["default-sim", "--scenario", str(p)]) == 1


@pytest.mark.parametrize("argv", [
    ["net", "--input", "/nonexistent.csv"],
    ["split", "--policy", "weird"],
    ["account", "--end-node-policy", "Nope"],
    ["account", "--fmv-adjustment", "abc"],
    ["default-sim"],
])
def test_malformed_config_exit_2(argv):
    assert main(argv) == 2


def test_unknown_subcommand_exit_2():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_tfn_dump_round_trips_as_policy(tmp_path, out):
    assert main(["split", "--out-dir", str(out)]) == 0
    again = tmp_path / "again"
    assert main(["decompose", "--policy", f"explicit:{out / 'tfn.json'}", "--out-dir", str(again)]) == 0
    assert main(["decompose", "--out-dir", str(out)]) == 0
    assert (again / "decomposition.json").read_bytes() == (out / "decomposition.json").read_bytes()


def test_account_with_slr(tmp_path, capsys):
    p = tmp_path / "slr.json"
    p.write_text('{"capital": 5, "assets": 90, "exposures": 10}')
    assert main(["account", "--slr-state", str(p), "--slr-floor", "0.03", "--out-dir", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "accounting.json").read_text())
    g = [r for r in rows if r["agent"] == "g"][0]
    assert g["slr"]["before"] == "0.050000"
    assert "PostReformSecuredFinancing" in capsys.readouterr().out


def test_compare_ccp(tmp_path):
    assert main(["compare-ccp", "--end-node-policy", "FinalSaleDerivative", "--fee-per-unit", "0.01",
                 "--out-dir", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "ccp.json").read_text())
    assert all(r["holds"] for r in rows)


def test_econ_writes_curves(tmp_path, capsys):
    assert main(["econ", "--out-dir", str(tmp_path), "--points", "11"]) == 0
    assert "dr*/dL = -" in capsys.readouterr().out
    assert len((tmp_path / "curves.csv").read_text().splitlines()) == 12
    assert (tmp_path / "optimizer.csv").read_text().startswith("step,r,profit")


def test_econ_bad_params(tmp_path):
    p = tmp_path / "p.json"
    p.write_text('{"dealer": {"r_int": 0.01}}')
    assert main(["econ", "--params", str(p)]) == 2


def test_generate(tmp_path, capsys):
    assert main(["generate", "--seed", "42", "--agents", "5", "--trades", "20"]) == 0
    assert capsys.readouterr().out == generate_book(42, 5, 20)
    assert main(["generate", "--agents", "1"]) == 2
    target = tmp_path / "b.csv"
    assert main(["generate", "--seed", "3", "--output", str(target)]) == 0
    assert main(["validate", "--input", str(target)]) == 0


def test_generate_book_contract():
    assert generate_book(42, 5, 20) == generate_book(42, 5, 20)
    assert generate_book(42, 5, 20) != generate_book(43, 5, 20)
    with pytest.raises(ValueError):
        generate_book(1, 1, 5)
    for seed in range(1000):
        validate_book(parse_book_csv(generate_book(seed, 2 + seed % 9, seed % 41)))
