"""
End-to-end runs through cli.main: exit codes, printed summary and the
artifacts written to the output directory.
"""
import json

import pytest
import yaml

import cli
from cli import build_parser
from orchestrator.dispatcher import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK

LINEAR_PROBLEM = {
    "name": "linear",
    "equation": {
        "alpha": 1, "r": "1", "p": "1", "p_hat": "0", "q": "1", "f_coef": "1",
        "a": "1", "a_k": "0", "s": 0, "m": "t", "eta": "t",
    },
    "boundary": {"kind": "dirichlet"},
    "domain": {"x_lo": 0.0, "x_hi": 3.141592653589793},
    "time": {"t0": 1.0},
}


def _problem_file(tmp_path, **equation) -> str:
    doc = json.loads(json.dumps(LINEAR_PROBLEM))
    doc["equation"].update(equation)
    path = tmp_path / "problem.yaml"
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def _main(tmp_path, *args) -> int:
    return cli.main([*args, "--out", str(tmp_path / "out"), "--settings", str(tmp_path / "no-settings.yaml")])


def test_missing_problem_file(tmp_path, log_file, capsys):
    code = _main(tmp_path, "check", "--problem", str(tmp_path / "missing.cfg"))
    assert code == EXIT_CONFIG
    assert "FileNotFoundError" in capsys.readouterr().err
    diagnostics = json.loads((tmp_path / "out" / "diagnostics.json").read_text())
    assert diagnostics["error"]["exit_code"] == EXIT_CONFIG


def test_unknown_example(tmp_path, log_file):
    assert _main(tmp_path, "check", "--example", "9.9") == EXIT_CONFIG


def test_bad_format(tmp_path, log_file):
    assert _main(tmp_path, "check", "--example", "3.1", "--format", "json,pdf") == EXIT_CONFIG


def test_source_flags_are_exclusive(tmp_path, log_file):
    with pytest.raises(SystemExit) as excinfo:
        _main(tmp_path, "check", "--example", "3.1", "--problem", "x.yaml")
    assert excinfo.value.code == 2


def test_problem_with_missing_alpha(tmp_path, log_file):
    doc = json.loads(json.dumps(LINEAR_PROBLEM))
    del doc["equation"]["alpha"]
    path = tmp_path / "problem.yaml"
    path.write_text(yaml.safe_dump(doc))
    assert _main(tmp_path, "check", "--problem", str(path)) == EXIT_CONFIG
    diagnostics = json.loads((tmp_path / "out" / "diagnostics.json").read_text())
    assert diagnostics["error"]["key"] == "alpha"


def test_check_skips_when_hypotheses_fail(tmp_path, log_file, capsys):
    code = _main(tmp_path, "check", "--example", "3.1")
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("Skipped(hypotheses violated: H1)") == 4
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert [row["theorem"] for row in summary["summary"]] == ["2.1", "2.2", "2.3", "2.4"]
    assert summary["hypotheses_violated"] == ["H1"]


def test_check_single_theorem_with_override(tmp_path, log_file, capsys):
    code = _main(tmp_path, "check", "--example", "3.1", "--theorem", "2.4", "--skip-hypotheses")
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "case (1): Oscillatory" in out
    assert "WARNING: hypotheses violated" in out
    assert "Skipped(not selected)" in out
    assert (tmp_path / "out" / "report_2.4.json").exists()
    assert (tmp_path / "out" / "run_meta.json").exists()


def test_single_theorem_without_override_is_skipped(tmp_path, log_file, capsys):
    code = _main(tmp_path, "check", "--example", "3.1", "--theorem", "2.4")
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "Skipped(hypotheses violated: H1)" in out
    assert "case (1): Oscillatory" not in out
    assert "--skip-hypotheses" in cli.__doc__
    assert "which fail H1" in " ".join(build_parser().format_help().split())


def test_hypotheses_command(tmp_path, log_file, capsys):
    assert _main(tmp_path, "hypotheses", "--example", "3.2") == EXIT_OK
    out = capsys.readouterr().out
    assert "H1: Violated" in out
    assert "H2: Satisfied" in out


def test_reduce_command_on_harmonic_problem(tmp_path, log_file, capsys):
    path = _problem_file(tmp_path)
    code = _main(tmp_path, "reduce", "--problem", path, "--t-end", "4.14159", "--dt", "1e-3",
                 "--format", "json,csv,svg")
    assert code == EXIT_OK
    assert "reduced equation sign changes: 1" in capsys.readouterr().out
    out_dir = tmp_path / "out"
    meta = json.loads((out_dir / "reduced_ode.json").read_text())
    assert meta["converged"] is True
    assert meta["sign_changes"]["first_crossing"] == pytest.approx(1.0 + 1.5707963, abs=1e-3)
    assert (out_dir / "reduced_ode.csv").read_text().startswith("t,v,vprime\n")
    assert "<svg" in (out_dir / "reduced_ode.svg").read_text()


def test_csv_only_output(tmp_path, log_file):
    path = _problem_file(tmp_path)
    assert _main(tmp_path, "reduce", "--problem", path, "--t-end", "2", "--dt", "0.01", "--format", "csv") == EXIT_OK
    out_dir = tmp_path / "out"
    assert (out_dir / "reduced_ode.csv").exists()
    assert not (out_dir / "reduced_ode.json").exists()
    assert not (out_dir / "reduced_ode.svg").exists()


def test_repeated_runs_are_byte_identical(tmp_path, log_file, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    path = _problem_file(tmp_path)
    for run in ("first", "second"):
        code = cli.main(["reduce", "--problem", path, "--t-end", "2", "--dt", "0.01", "--format", "json,csv",
                         "--out", str(tmp_path / run), "--settings", str(tmp_path / "no-settings.yaml")])
        assert code == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "first").iterdir())
    assert "run_meta.json" in names and "reduced_ode.json" in names
    assert names == sorted(p.name for p in (tmp_path / "second").iterdir())
    for name in names:
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes(), name


def test_simulate_command(tmp_path, log_file, capsys):
    path = _problem_file(tmp_path, p="0", f_coef="0")
    code = _main(tmp_path, "simulate", "--problem", path, "--t-end", "2", "--dt", "1e-3", "--nx", "41")
    assert code == EXIT_OK
    assert "sign changes of v(t)" in capsys.readouterr().out
    out_dir = tmp_path / "out"
    simulation = json.loads((out_dir / "simulation.json").read_text())
    assert simulation["mode"] == "w"
    header = (out_dir / "trace.csv").read_text().splitlines()[0]
    assert header == "t,x,u"


def test_simulation_blowup_exits_numeric(tmp_path, log_file):
    path = _problem_file(tmp_path, p="0", f_coef="-100")
    code = _main(tmp_path, "simulate", "--problem", path, "--t-end", "4", "--dt", "1e-3", "--nx", "21")
    assert code == EXIT_NUMERIC
    out_dir = tmp_path / "out"
    assert (out_dir / "trace.csv").exists()
    diagnostics = json.loads((out_dir / "diagnostics.json").read_text())
    assert diagnostics["error"]["type"] == "SimulationError"


def test_build_config_theorem_selection():
    parser = cli.build_parser()
    config = cli.build_config(parser.parse_args(["check", "--example", "3.1", "--theorem", "2.3", "--theorem", "2.3"]))
    assert config.theorems == ["2.3"]
    config = cli.build_config(parser.parse_args(["check", "--example", "3.1", "--theorem", "all"]))
    assert config.theorems == ["2.1", "2.2", "2.3", "2.4"]
    config = cli.build_config(parser.parse_args(["report", "--example", "3.2", "--format", "JSON, svg"]))
    assert config.formats == ("json", "svg")
