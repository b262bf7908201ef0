import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from wccopf.case_io import (apply_stress_modifiers, load_case_file,
                            load_wind_file, serialize_matpower_case)
from wccopf.cli import main, parse_caps
from wccopf.solver import build_problem, solve_wcc_opf
from wccopf.wind_model import build_fleet, scale_to_penetration

from helpers import triangle_network

WIND2 = {
    "plants": [
        {"bus": 2, "mean_mw": 60.0, "std_mw": 18.0,
         "policy": {"type": "reserve"}},
        {"bus": 3, "mean_mw": 30.0, "std_mw": 9.0,
         "policy": {"type": "reserve"}},
    ],
    "correlation": [[1.0, 0.2], [0.2, 1.0]],
    "seed": 11,
}


@pytest.fixture(scope="module")
def toy_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("toycase")
    case = d / "triangle.m"
    case.write_text(serialize_matpower_case(triangle_network()))
    wind = d / "wind2.json"
    wind.write_text(json.dumps(WIND2))
    return {"case": str(case), "wind": str(wind), "dir": d}


def _base(toy_files, *extra):
    return ["--case", toy_files["case"], "--wind", toy_files["wind"],
            "--load-factor", "1.0", "--limit-factor", "1.0",
            "--penetration", "30"] + list(extra)


def test_parse_caps():
    assert parse_caps("") == {}
    assert parse_caps("85=-45,117=-30") == {85: -45.0, 117: -30.0}
    from wccopf.cli import CliError
    with pytest.raises(CliError):
        parse_caps("85:-45")
    with pytest.raises(CliError):
        parse_caps("85=low")


def test_solve_writes_report(toy_files, tmp_path):
    out = tmp_path / "report.json"
    rc = main(["solve"] + _base(toy_files, "--out", str(out)))
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["status"] == "converged"
    assert "wall_time_s" not in payload
    assert payload["config"]["case"] == toy_files["case"]
    assert payload["config"]["penetration"] == 30.0
    assert set(payload["decision"]) == {"p", "v", "alpha_g", "alpha_w",
                                        "r_up_g", "r_dn_g", "r_up_w",
                                        "r_dn_w"}
    assert payload["objective"] > 0


def test_solve_output_is_byte_stable(toy_files, tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    assert main(["solve"] + _base(toy_files, "--out", str(a))) == 0
    assert main(["solve"] + _base(toy_files, "--out", str(b))) == 0
    assert a.read_bytes() == b.read_bytes()


def test_validate_round_trip(toy_files, tmp_path):
    out = tmp_path / "report.json"
    assert main(["solve"] + _base(toy_files, "--out", str(out))) == 0
    vout = tmp_path / "audit.json"
    rc = main(["validate"] + _base(toy_files, "--dispatch", str(out),
                                   "--samples", "30000",
                                   "--out", str(vout)))
    assert rc == 0
    audit = json.loads(vout.read_text())
    assert audit["all_ok"] is True


def test_validate_catches_doctored_dispatch(toy_files, tmp_path, capsys):
    out = tmp_path / "report.json"
    assert main(["solve"] + _base(toy_files, "--out", str(out))) == 0
    payload = json.loads(out.read_text())
    for key in ("r_up_g", "r_dn_g", "r_up_w", "r_dn_w"):
        payload["decision"][key] = \
            [0.0] * len(payload["decision"][key])
    doctored = tmp_path / "doctored.json"
    doctored.write_text(json.dumps(payload))
    rc = main(["validate"] + _base(toy_files, "--dispatch", str(doctored),
                                   "--samples", "30000",
                                   "--out", str(tmp_path / "audit.json")))
    assert rc == 4
    assert "above budget" in capsys.readouterr().err


def test_missing_case_exits_one(toy_files, tmp_path, capsys):
    rc = main(["solve", "--case", str(tmp_path / "nope.m"),
               "--wind", toy_files["wind"], "--out",
               str(tmp_path / "x.json")])
    assert rc == 1
    assert "cannot load case" in capsys.readouterr().err


def test_bad_cap_syntax_exits_one(toy_files, tmp_path, capsys):
    rc = main(["solve"] + _base(toy_files, "--caps", "2:-10",
                                "--out", str(tmp_path / "x.json")))
    assert rc == 1
    assert "bad cap entry" in capsys.readouterr().err


def test_cap_bus_without_plant_exits_one(toy_files, tmp_path, capsys):
    rc = main(["solve"] + _base(toy_files, "--caps", "99=-10",
                                "--out", str(tmp_path / "x.json")))
    assert rc == 1
    assert "99" in capsys.readouterr().err


def test_infeasible_exits_two(toy_files, tmp_path, capsys):
    case = toy_files["dir"] / "heavy.m"
    case.write_text(serialize_matpower_case(triangle_network(load=600.0)))
    rc = main(["solve", "--case", str(case), "--wind", toy_files["wind"],
               "--load-factor", "1.0", "--limit-factor", "1.0",
               "--penetration", "10", "--out", str(tmp_path / "x.json")])
    assert rc == 2
    assert "infeasible" in capsys.readouterr().err


def test_iteration_limit_exits_three(toy_files, tmp_path, capsys):
    rc = main(["solve"] + _base(toy_files, "--max-iters", "1",
                                "--out", str(tmp_path / "x.json")))
    assert rc == 3
    assert "no convergence" in capsys.readouterr().err


def test_env_defaults_and_flag_precedence(toy_files, tmp_path, monkeypatch):
    out = tmp_path / "env.json"
    monkeypatch.setenv("WCCOPF_EPSILON", "0.5")
    assert main(["solve"] + _base(toy_files, "--out", str(out))) == 0
    assert json.loads(out.read_text())["config"]["epsilon"] == 0.5
    assert main(["solve"] + _base(toy_files, "--epsilon", "0.2",
                                  "--out", str(out))) == 0
    assert json.loads(out.read_text())["config"]["epsilon"] == 0.2


def test_sweep_penetration_csv_matches_solo_solve(toy_files, tmp_path):
    csv = tmp_path / "sweep.csv"
    rc = main(["sweep-penetration"] + _base(toy_files)
              + ["--penetrations", "20,40", "--out", str(csv)])
    assert rc == 0
    lines = csv.read_text().strip().split("\n")
    assert lines[0] == ("penetration,status,total_cost,cost_energy_gen,"
                        "cost_energy_wind,cost_reserve_gen,"
                        "cost_reserve_wind,total_wind_mw,total_reserve_mw,"
                        "expected_curtailment_mw")
    assert len(lines) == 3
    row = lines[1].split(",")
    assert row[0] == "20" and row[1] == "converged"

    net = apply_stress_modifiers(load_case_file(toy_files["case"]),
                                 load_factor=1.0, limit_factor=1.0)
    fleet = build_fleet(load_wind_file(toy_files["wind"], net), net)
    fleet = scale_to_penetration(fleet, net.total_load, 20.0)
    rep = solve_wcc_opf(build_problem(net, fleet, epsilon=0.1))
    assert row[2] == "%.6f" % rep.objective


def test_empty_penetration_list_gives_header_only(toy_files, tmp_path):
    csv = tmp_path / "empty.csv"
    rc = main(["sweep-penetration"] + _base(toy_files)
              + ["--penetrations", "", "--out", str(csv)])
    assert rc == 0
    assert csv.read_text().count("\n") == 1


def test_sweep_caps_grid(toy_files, tmp_path):
    csv = tmp_path / "caps.csv"
    rc = main(["sweep-caps"] + _base(toy_files)
              + ["--cap-buses", "2,3", "--cap-range=-10:10:10",
                 "--out", str(csv)])
    assert rc == 0
    lines = csv.read_text().strip().split("\n")
    assert lines[0].startswith("cap_2_mw,cap_3_mw,status,total_cost")
    assert len(lines) == 1 + 9
    firsts = [ln.split(",")[0] for ln in lines[1:]]
    assert firsts == ["-10", "-10", "-10", "0", "0", "0", "10", "10", "10"]
    assert all(ln.split(",")[2] == "converged" for ln in lines[1:])


def test_sweep_caps_reports_infeasible_rows_blank(toy_files, tmp_path):
    # a deep cap on the load-bus plant forces its output negative and
    # the extra imports do not fit on the lines
    csv = tmp_path / "caps_bad.csv"
    rc = main(["sweep-caps"] + _base(toy_files)
              + ["--cap-buses", "2,3", "--cap-range=-30:-30:10",
                 "--out", str(csv)])
    assert rc == 2
    lines = csv.read_text().strip().split("\n")
    assert len(lines) == 2
    cells = lines[1].split(",")
    assert cells[2] == "infeasible"
    assert all(c == "" for c in cells[3:])


def test_default_cap_buses_are_largest_sigma(toy_files, tmp_path):
    csv = tmp_path / "caps_default.csv"
    rc = main(["sweep-caps"] + _base(toy_files)
              + ["--cap-range=0:0:10", "--out", str(csv)])
    assert rc == 0
    assert csv.read_text().split("\n")[0].startswith("cap_2_mw,cap_3_mw")


def test_console_entry_point(toy_files, tmp_path):
    exe = shutil.which("wccopf")
    assert exe, "console script not installed"
    out = tmp_path / "cli.json"
    res = subprocess.run(
        [exe, "solve"] + _base(toy_files, "--out", str(out)),
        capture_output=True, text=True, timeout=300)
    assert res.returncode == 0, res.stderr
    assert json.loads(out.read_text())["status"] == "converged"
    res = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for word in ("solve", "sweep-penetration", "sweep-caps", "validate"):
        assert word in res.stdout
