import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from numerics.expr import parse_expression  # noqa: E402
from problem.examples import builtin_example  # noqa: E402
from problem.model import Dirichlet, Interval, PowerLaw, ProblemSpec  # noqa: E402


@pytest.fixture
def ex31() -> ProblemSpec:
    return builtin_example("3.1")


@pytest.fixture
def ex32() -> ProblemSpec:
    return builtin_example("3.2")


def make_spec(**overrides) -> ProblemSpec:
    """Linear undamped wave on [0, pi] with Dirichlet ends; fields overridable by source string."""
    fields = {
        "alpha": 1,
        "r": "1",
        "p": "0",
        "p_hat": "0",
        "q": "1",
        "a": "1",
        "a_family": "0",
        "m": "t",
        "eta": "t",
        "f_coef": "0",
    }
    fields.update({k: v for k, v in overrides.items() if k in fields})
    return ProblemSpec(
        alpha=fields["alpha"],
        r=parse_expression(fields["r"]),
        p=parse_expression(fields["p"]),
        p_hat=parse_expression(fields["p_hat"]),
        q=parse_expression(fields["q"]),
        a=parse_expression(fields["a"]),
        a_family=parse_expression(fields["a_family"]),
        s=overrides.get("s", 0),
        m=parse_expression(fields["m"]),
        eta=parse_expression(fields["eta"]),
        f_form=PowerLaw(parse_expression(fields["f_coef"])),
        bc=overrides.get("bc", Dirichlet()),
        domain=overrides.get("domain", Interval(0.0, 3.141592653589793)),
        t0=overrides.get("t0", 1.0),
        name=overrides.get("name", "linear wave"),
    )


@pytest.fixture
def linear_spec() -> ProblemSpec:
    return make_spec()


@pytest.fixture
def log_file(tmp_path, monkeypatch):
    path = tmp_path / "run.log"
    monkeypatch.setenv("LOG_FILE", str(path))
    return path
