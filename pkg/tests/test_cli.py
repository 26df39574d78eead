import csv
import subprocess
import sys

import pytest

from lathom.cli import run_cli
from conftest import ROOT

CONFIGS = ROOT / "configs"


def test_missing_config_is_a_usage_error(tmp_path, capsys):
    assert run_cli(["energy", "--config", str(tmp_path / "nope.toml")]) == 1
    assert "not found" in capsys.readouterr().err


def test_short_schedule_rejected():
    code = run_cli(["gamma-study", "--config", str(CONFIGS / "g1.toml"), "--override", "schedule.len=2"])
    assert code == 1


@pytest.mark.parametrize("argv", [[], ["bogus"], ["energy"], ["energy", "--config", "x", "--frobnicate"]])
def test_bad_arguments(argv):
    assert run_cli(argv) == 1


def test_malformed_config(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[density]\np = \n")
    assert run_cli(["validate-density", "--config", str(bad)]) == 1
    nodens = tmp_path / "nodens.toml"
    nodens.write_text("[domain]\nd = 2\n")
    assert run_cli(["energy", "--config", str(nodens)]) == 1


def test_energy_command_writes_outputs(tmp_path):
    assert run_cli(["energy", "--config", str(CONFIGS / "energy_d2.toml"), "--out", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "energy_d2_breakdown.csv", encoding="utf-8")))
    assert rows[0] == ["xi", "partial_energy"] and len(rows) == 29
    assert (tmp_path / "energy_d2_u.lhf1").exists()
    assert (tmp_path / "energy_d2_summary.txt").read_text().startswith("PASS")


def test_failed_check_exits_two(tmp_path):
    code = run_cli(["cell-problem", "--config", str(CONFIGS / "cell_d2.toml"), "--out", str(tmp_path),
                    "--override", "schedule.samples=1", "--override", "schedule.tol=1e-9"])
    assert code == 2
    assert (tmp_path / "cell_d2_summary.txt").read_text().startswith("FAIL")


def test_validate_and_inequalities(tmp_path):
    assert run_cli(["validate-density", "--config", str(CONFIGS / "density_d3.toml"), "--out", str(tmp_path)]) == 0
    code = run_cli(["check-inequalities", "--config", str(CONFIGS / "ineq_d2.toml"), "--out", str(tmp_path),
                    "--override", "poincare.eps_inv=[16, 32]", "--override", "long_range.eps_inv=[64]"])
    assert code == 0
    for name in ("gns", "poincare", "poincare_rescaled", "long_range"):
        head = next(csv.reader(open(tmp_path / f"ineq_d2_{name}.csv", encoding="utf-8")))
        assert head == ["sample_id", "lhs", "rhs", "ratio"]


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "lathom", "energy", "--config", str(tmp_path / "none.toml")],
                         capture_output=True, text=True)
    assert out.returncode == 1 and "error" in out.stderr
