"""End-to-end command line runs, in process via main()."""

import json

import pytest

from mixedlap.cli import main


def run(tmp_path, *argv):
    out = tmp_path / "out"
    rc = main([*argv, "--out", str(out)])
    return rc, out


def test_solve_writes_all_artifacts(tmp_path, capsys):
    rc, out = run(tmp_path, "solve", "--mesh", "48", "--format", "json,csv,svg")
    assert rc == 0
    doc = json.loads((out / "report.json").read_text())
    assert set(doc) == {"version", "config", "environment", "results"}
    names = [r["name"] for r in doc["results"]]
    assert names == ["residual", "positivity", "monotonicity", "nehari",
                     "mass-identity"]
    assert all(r["verdict"] == "pass" for r in doc["results"])
    assert doc["config"]["mesh"] == 48
    assert "lambda" in doc["config"]
    for artifact in ("report.csv", "profile.svg", "profile.csv"):
        assert (out / artifact).exists()
    assert "all 5 checks passed" in capsys.readouterr().out


def test_rerun_is_byte_identical_except_timestamp(tmp_path):
    args = ("solve", "--mesh", "48", "--format", "json")
    rc1, out = run(tmp_path, *args)
    first = (out / "report.json").read_text().splitlines()
    rc2, _ = run(tmp_path, *args)  # same out dir: warm cache this time
    second = (out / "report.json").read_text().splitlines()
    assert rc1 == rc2 == 0
    diff = [(a, b) for a, b in zip(first, second) if a != b]
    assert len(first) == len(second)
    assert len(diff) == 1
    assert "timestamp" in diff[0][0]


def test_operator_cache_populated(tmp_path):
    rc, out = run(tmp_path, "solve", "--mesh", "48")
    assert rc == 0
    assert list((out / "cache").glob("*.bin"))


def test_format_controls_artifacts(tmp_path):
    rc, out = run(tmp_path, "solve", "--mesh", "48", "--format", "csv")
    assert rc == 0
    assert not (out / "report.json").exists()
    assert not (out / "profile.svg").exists()
    assert (out / "report.csv").exists()
    assert (out / "profile.csv").exists()


def test_spectrum_command(tmp_path):
    rc, out = run(tmp_path, "spectrum", "--mesh", "48", "--format", "json,csv,svg")
    assert rc == 0
    doc = json.loads((out / "report.json").read_text())
    names = {r["name"] for r in doc["results"]}
    assert "sigma-below" in names and "weighted-gap-l2" in names
    assert (out / "eigenfunctions.svg").exists()
    assert (out / "eigenfunctions.csv").exists()


def test_verify_command_passes(tmp_path):
    rc, out = run(tmp_path, "verify", "--mesh", "48")
    assert rc == 0
    doc = json.loads((out / "report.json").read_text())
    assert len(doc["results"]) == 12  # shape battery + non-degeneracy


@pytest.mark.parametrize("control,expect_fail", [
    ("third-eigenfunction", "sign-changes"),
    ("shifted-potential", "sigma-below"),
])
def test_negative_controls_exit_2(tmp_path, control, expect_fail, capsys):
    rc, out = run(tmp_path, "verify", "--mesh", "48",
                  "--negative-control", control)
    assert rc == 2
    doc = json.loads((out / "report.json").read_text())
    failed = {r["name"] for r in doc["results"] if r["verdict"] == "fail"}
    assert expect_fail in failed
    assert "checks failed" in capsys.readouterr().out


def test_continue_s_command(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("knots = 3\ns_start = 0.3\ns_stop = 0.6\n")
    rc, out = run(tmp_path, "continue-s", "--mesh", "48",
                  "--config", str(cfg), "--format", "json,csv,svg")
    assert rc == 0
    doc = json.loads((out / "report.json").read_text())
    assert [r["name"] for r in doc["results"]] == ["sign-count", "sign-criterion"]
    assert doc["results"][0]["data"]["counts"] == [1, 1, 1]
    assert (out / "lambda2.svg").exists()
    assert len((out / "trace.csv").read_text().splitlines()) == 4


def test_continue_p_command(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("knots = 3\np_start = 2.6\np_stop = 3.0\n")
    rc, out = run(tmp_path, "continue-p", "--mesh", "48",
                  "--config", str(cfg), "--format", "json,csv,svg")
    assert rc == 0
    doc = json.loads((out / "report.json").read_text())
    assert [r["name"] for r in doc["results"]] == ["path-return", "margin-floor"]
    assert all(r["verdict"] == "pass" for r in doc["results"])
    assert (out / "margins.svg").exists()
    header = (out / "trace.csv").read_text().splitlines()[0]
    assert header == "p,sup_norm,gap_low,gap_high"


def test_extend_command(tmp_path):
    rc, out = run(tmp_path, "extend", "--mesh", "64", "--format", "json,csv,svg")
    assert rc == 0
    doc = json.loads((out / "report.json").read_text())
    assert [r["name"] for r in doc["results"]] == ["trace-consistency",
                                                   "moment-ratio"]
    assert all(r["verdict"] == "pass" for r in doc["results"])
    assert (out / "extension.svg").exists()
    assert (out / "extension.csv").read_text().startswith("r,t,W\n")


def test_config_file_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mesh = 48\ns = 0.25\n")
    rc, out = run(tmp_path, "solve", "--config", str(cfg), "--mesh", "32")
    assert rc == 0
    doc = json.loads((out / "report.json").read_text())
    assert doc["config"]["mesh"] == 32
    assert doc["config"]["s"] == 0.25


def test_unknown_config_key_exits_1(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mesh = 48\nwibble = 3\n")
    rc, _ = run(tmp_path, "solve", "--config", str(cfg))
    assert rc == 1
    assert "unknown key 'wibble'" in capsys.readouterr().err


def test_supercritical_exponent_exits_1(tmp_path, capsys):
    rc, _ = run(tmp_path, "solve", "--dim", "3", "--p", "6.0")
    assert rc == 1
    assert "critical exponent" in capsys.readouterr().err


def test_invalid_mesh_exits_1(tmp_path):
    rc, _ = run(tmp_path, "solve", "--mesh", "8")
    assert rc == 1


def test_runtime_error_recorded_in_report(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("heights = 0.2,0.00005\n")
    rc, out = run(tmp_path, "extend", "--mesh", "48", "--config", str(cfg),
                  "--format", "json")
    assert rc == 1
    assert "not resolved" in capsys.readouterr().err
    doc = json.loads((out / "report.json").read_text())
    rows = doc["results"]
    assert rows[-1]["name"] == "runtime-error"
    assert rows[-1]["verdict"] == "error"
    assert "heights" in rows[-1]["data"]["message"]


def test_bad_subcommand_exits_1(capsys):
    assert main(["fly"]) == 1
    assert main([]) == 1
    assert "error" in capsys.readouterr().err


def test_help_and_version_exit_0(capsys):
    assert main(["--version"]) == 0
    assert "mixedlap" in capsys.readouterr().out
    assert main(["--help"]) == 0
