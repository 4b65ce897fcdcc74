"""
Problem model, built-in examples, hypothesis sampling and problem files.
"""
from fractions import Fraction

import pytest
import yaml

from conftest import make_spec
from numerics.expr import parse_expression
from orchestrator.problem_files import (
    ProblemFile,
    ProblemFileError,
    load_problem,
    load_run_inputs,
    problem_to_dict,
    save_problem,
)
from problem.examples import builtin_example
from problem.hypotheses import SATISFIED, UNCHECKED, VIOLATED, check_hypotheses
from problem.model import (
    Box,
    CustomNonlinearity,
    Dirichlet,
    Interval,
    ProblemSpecError,
    Robin,
    UnknownExampleError,
    parse_alpha,
)


# ─── Model ───


@pytest.mark.parametrize("raw, expected", [(5, Fraction(5)), ("3/5", Fraction(3, 5)), (1, Fraction(1))])
def test_parse_alpha_accepts_odd_ratios(raw, expected):
    assert parse_alpha(raw) == expected


@pytest.mark.parametrize("raw", [2, "1/2", 0, -3, "abc"])
def test_parse_alpha_rejects(raw):
    with pytest.raises(ProblemSpecError):
        parse_alpha(raw)


def test_spec_rejects_foreign_variables():
    with pytest.raises(ProblemSpecError):
        make_spec(r="x+1")
    with pytest.raises(ProblemSpecError):
        make_spec(t0=0.0)


def test_degenerate_domains():
    with pytest.raises(ProblemSpecError):
        Interval(1.0, 1.0)
    with pytest.raises(ProblemSpecError):
        Box((0.0, 0.0), (1.0,))


def test_custom_nonlinearity_exponent():
    spec = make_spec().with_changes(f_form=CustomNonlinearity(parse_expression("1"), Fraction(3)))
    assert spec.f_exponent == 3
    assert make_spec(alpha="3").f_exponent == 3


def test_builtin_examples(ex31, ex32):
    assert ex31.alpha == 5
    assert isinstance(ex31.bc, Robin)
    assert ex31.domain == Interval(0.0, 1.0)
    assert ex32.alpha == 3
    assert isinstance(ex32.bc, Dirichlet)
    assert ex32.s == 1


def test_unknown_example():
    with pytest.raises(UnknownExampleError):
        builtin_example("9.9")


# ─── Hypotheses ───


def test_example_3_1_violates_h1_at_start(ex31):
    report = check_hypotheses(ex31, (1.0, 100.0), n_t=50, n_x=5)
    h1 = report.entries["H1"]
    assert h1.verdict == VIOLATED
    witness = h1.witnesses[0]
    assert witness.t == 1.0
    assert witness.lhs == 1.0
    assert witness.rhs == 4.0
    assert "H1" in report.violated()
    assert not report.all_satisfied


def test_example_3_1_other_hypotheses(ex31):
    report = check_hypotheses(ex31, (1.0, 100.0), n_t=50, n_x=5)
    assert report.entries["H2"].verdict == SATISFIED
    assert report.entries["H3"].verdict == SATISFIED
    assert report.entries["BC"].verdict == SATISFIED


def test_example_3_2_deviating_arguments(ex32):
    report = check_hypotheses(ex32, (1.0, 100.0), n_t=50, n_x=5)
    assert report.entries["H2"].verdict == SATISFIED
    assert report.entries["H1"].verdict == VIOLATED


def test_retarded_forcing_violates_h2():
    report = check_hypotheses(make_spec(m="t/2"), (1.0, 10.0), n_t=20, n_x=3)
    h2 = report.entries["H2"]
    assert h2.verdict == VIOLATED
    assert h2.witnesses[0].inequality == "m(t) >= t"


def test_linear_wave_satisfies_everything():
    report = check_hypotheses(make_spec(p="1", f_coef="1"), (1.0, 10.0), n_t=20, n_x=5)
    assert report.all_satisfied
    assert report.violated() == []


def test_custom_nonlinearity_leaves_h3_unchecked():
    spec = make_spec(p="1").with_changes(f_form=CustomNonlinearity(parse_expression("1"), Fraction(3)))
    report = check_hypotheses(spec, (1.0, 10.0), n_t=10, n_x=3)
    assert report.entries["H3"].verdict == UNCHECKED


def test_evaluation_failure_is_unchecked():
    report = check_hypotheses(make_spec(p="1", q="ln(t-2)"), (1.0, 10.0), n_t=10, n_x=3)
    assert report.entries["H3"].verdict == UNCHECKED
    assert "evaluation failed" in report.entries["H3"].reason


def test_hypothesis_grid_validation(ex31):
    with pytest.raises(ValueError):
        check_hypotheses(ex31, (0.5, 10.0))
    with pytest.raises(ValueError):
        check_hypotheses(ex31, (1.0, 10.0), n_t=1)


def test_report_dict_shape(ex31):
    data = check_hypotheses(ex31, (1.0, 10.0), n_t=10, n_x=3).to_dict()
    assert set(data["entries"]) == {"H1", "H2", "H3", "BC"}
    assert data["grid"]["n_t"] == 10


# ─── Problem files ───


@pytest.mark.parametrize("example_id", ["3.1", "3.2"])
def test_problem_file_round_trip(tmp_path, example_id):
    spec = builtin_example(example_id)
    path = save_problem(spec, tmp_path / "problem.yaml")
    assert load_problem(path) == spec


def test_saved_file_is_canonical(tmp_path, ex32):
    first = tmp_path / "a.yaml"
    second = tmp_path / "b.yaml"
    save_problem(ex32, first)
    save_problem(load_run_inputs(first), second)
    assert first.read_text() == second.read_text()


def test_shipped_problem_files_match_examples():
    from conftest import ROOT

    for example_id, name in (("3.1", "example_3_1.yaml"), ("3.2", "example_3_2.yaml")):
        assert load_problem(ROOT / "config" / "problems" / name) == builtin_example(example_id)


def _write(tmp_path, doc) -> str:
    path = tmp_path / "problem.yaml"
    path.write_text(yaml.safe_dump(doc))
    return str(path)


def _doc(ex31) -> dict:
    return problem_to_dict(ProblemFile(spec=ex31))


def test_missing_alpha(tmp_path, ex31):
    doc = _doc(ex31)
    del doc["equation"]["alpha"]
    with pytest.raises(ProblemFileError) as excinfo:
        load_problem(_write(tmp_path, doc))
    assert excinfo.value.key == "alpha"


def test_bad_expression_carries_offset(tmp_path, ex31):
    doc = _doc(ex31)
    doc["equation"]["r"] = "sin(t"
    with pytest.raises(ProblemFileError) as excinfo:
        load_problem(_write(tmp_path, doc))
    assert excinfo.value.key == "r"
    assert excinfo.value.offset == 5


def test_even_alpha_rejected(tmp_path, ex31):
    doc = _doc(ex31)
    doc["equation"]["alpha"] = 4
    with pytest.raises(ProblemFileError) as excinfo:
        load_problem(_write(tmp_path, doc))
    assert excinfo.value.key == "alpha"


def test_dirichlet_with_psi_rejected(tmp_path, ex31):
    doc = _doc(ex31)
    doc["boundary"]["kind"] = "dirichlet"
    with pytest.raises(ProblemFileError):
        load_problem(_write(tmp_path, doc))


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_problem("missing.cfg")


def test_optional_sections(tmp_path, ex31):
    doc = _doc(ex31)
    doc["tuning"] = {"b": "t", "tau": "t/2", "beta": 2.0}
    doc["initial"] = {"u0": "1+x"}
    doc["simulation"] = {"dt": 0.01, "unknown": 1}
    problem = load_run_inputs(_write(tmp_path, doc))
    assert problem.tuning.beta == 2.0
    assert problem.tuning.tau == parse_expression("t/2")
    assert problem.initial[1] == parse_expression("0")
    assert problem.simulation == {"dt": 0.01}


def test_bad_tuning(tmp_path, ex31):
    doc = _doc(ex31)
    doc["tuning"] = {"beta": -1.0}
    with pytest.raises(ProblemFileError) as excinfo:
        load_run_inputs(_write(tmp_path, doc))
    assert excinfo.value.key == "tuning"
