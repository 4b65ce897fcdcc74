"""
Problem files: YAML documents describing one equation instance.

    equation:  alpha, r, p, p_hat, q, f_coef, [f_exponent], a, a_k, s, m, eta
    boundary:  kind (robin | dirichlet), psi (robin only)
    domain:    x_lo, x_hi  (or lows, highs for a box)
    time:      t0
    tuning:    b, tau, beta  [t_star, ladder_start, ladder_ratio]   (optional)
    initial:   u0, u1 expressions in x                              (optional)
    simulation: dt, nx, t_end, relax_tol, max_iter, epsilon          (optional)

Every function value is an expression string.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Union

import yaml

from criteria.derived import TuningError, TuningParams
from numerics.expr import ExprAst, ExprError, parse_expression, unparse
from problem.model import (
    Box,
    CustomNonlinearity,
    Dirichlet,
    Interval,
    PowerLaw,
    ProblemSpec,
    ProblemSpecError,
    Robin,
    parse_alpha,
)

logger = logging.getLogger(__name__)

EQUATION_KEYS = ("alpha", "r", "p", "p_hat", "q", "f_coef", "a", "a_k", "s", "m", "eta")
SIMULATION_KEYS = ("dt", "nx", "t_end", "relax_tol", "max_iter", "epsilon")


class ProblemFileError(ValueError):
    """Raised for a malformed problem file; carries the offending key and expression offset."""

    def __init__(self, message: str, key: Optional[str] = None, offset: Optional[int] = None):
        super().__init__(message)
        self.key = key
        self.offset = offset


@dataclass
class ProblemFile:
    """Everything a run needs from one problem file."""

    spec: ProblemSpec
    tuning: TuningParams = field(default_factory=TuningParams)
    initial: Optional[tuple[ExprAst, ExprAst]] = None
    simulation: dict = field(default_factory=dict)
    source: Optional[str] = None


# ─── Loading ───


def _section(doc: dict, name: str, required: bool = True) -> dict:
    value = doc.get(name)
    if value is None:
        if required:
            raise ProblemFileError(f"missing section [{name}]", key=name)
        return {}
    if not isinstance(value, dict):
        raise ProblemFileError(f"section [{name}] must be a mapping", key=name)
    return value


def _required(section: dict, section_name: str, key: str):
    if key not in section or section[key] is None:
        raise ProblemFileError(f"missing key '{key}' in [{section_name}]", key=key)
    return section[key]


def _expr(value, key: str) -> ExprAst:
    try:
        return parse_expression(str(value))
    except ExprError as e:
        raise ProblemFileError(f"bad expression for '{key}': {e}", key=key, offset=e.offset) from e


def _number(value, key: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ProblemFileError(f"'{key}' must be a number, got {value!r}", key=key) from None


def _boundary(doc: dict):
    section = _section(doc, "boundary")
    kind = str(_required(section, "boundary", "kind")).lower()
    if kind == "robin":
        return Robin(_expr(_required(section, "boundary", "psi"), "psi"))
    if kind == "dirichlet":
        if section.get("psi") is not None:
            raise ProblemFileError("dirichlet boundary does not take 'psi'", key="psi")
        return Dirichlet()
    raise ProblemFileError(f"boundary kind must be robin or dirichlet, got {kind!r}", key="kind")


def _domain(doc: dict):
    section = _section(doc, "domain")
    try:
        if "lows" in section or "highs" in section:
            lows = tuple(_number(v, "lows") for v in _required(section, "domain", "lows"))
            highs = tuple(_number(v, "highs") for v in _required(section, "domain", "highs"))
            return Interval(lows[0], highs[0]) if len(lows) == 1 == len(highs) else Box(lows, highs)
        return Interval(
            _number(_required(section, "domain", "x_lo"), "x_lo"),
            _number(_required(section, "domain", "x_hi"), "x_hi"),
        )
    except ProblemSpecError as e:
        raise ProblemFileError(str(e), key="domain") from e


def _spec(doc: dict, name: str) -> ProblemSpec:
    eq = _section(doc, "equation")
    for key in EQUATION_KEYS:
        _required(eq, "equation", key)

    try:
        alpha = parse_alpha(eq["alpha"])
    except ProblemSpecError as e:
        raise ProblemFileError(str(e), key="alpha") from e

    coef = _expr(eq["f_coef"], "f_coef")
    if eq.get("f_exponent") is not None:
        try:
            f_form = CustomNonlinearity(coef, Fraction(str(eq["f_exponent"])))
        except (ValueError, ZeroDivisionError):
            raise ProblemFileError(f"bad f_exponent {eq['f_exponent']!r}", key="f_exponent") from None
    else:
        f_form = PowerLaw(coef)

    s = eq["s"]
    if isinstance(s, bool) or not isinstance(s, int):
        raise ProblemFileError(f"'s' must be an integer, got {s!r}", key="s")

    time = _section(doc, "time")
    try:
        return ProblemSpec(
            alpha=alpha,
            r=_expr(eq["r"], "r"),
            p=_expr(eq["p"], "p"),
            p_hat=_expr(eq["p_hat"], "p_hat"),
            q=_expr(eq["q"], "q"),
            a=_expr(eq["a"], "a"),
            a_family=_expr(eq["a_k"], "a_k"),
            s=s,
            m=_expr(eq["m"], "m"),
            eta=_expr(eq["eta"], "eta"),
            f_form=f_form,
            bc=_boundary(doc),
            domain=_domain(doc),
            t0=_number(_required(time, "time", "t0"), "t0"),
            name=name,
        )
    except ProblemSpecError as e:
        raise ProblemFileError(f"inconsistent problem: {e}") from e


def _tuning(doc: dict) -> TuningParams:
    section = _section(doc, "tuning", required=False)
    kwargs = {}
    for key in ("b", "tau"):
        if section.get(key) is not None:
            kwargs[key] = _expr(section[key], key)
    for key in ("beta", "t_star", "ladder_start", "ladder_ratio"):
        if section.get(key) is not None:
            kwargs[key] = _number(section[key], key)
    try:
        return TuningParams(**kwargs)
    except TuningError as e:
        raise ProblemFileError(f"bad tuning: {e}", key="tuning") from e


def _initial(doc: dict) -> Optional[tuple[ExprAst, ExprAst]]:
    section = _section(doc, "initial", required=False)
    if not section:
        return None
    u0 = _expr(_required(section, "initial", "u0"), "u0")
    u1 = _expr(section.get("u1", "0"), "u1")
    return u0, u1


def _simulation(doc: dict) -> dict:
    section = _section(doc, "simulation", required=False)
    unknown = set(section) - set(SIMULATION_KEYS)
    if unknown:
        logger.warning(f"ignoring unknown [simulation] keys: {sorted(unknown)}")
    return {k: section[k] for k in SIMULATION_KEYS if section.get(k) is not None}


def _read(path: Union[str, Path]) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"problem file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ProblemFileError(f"{path}: not valid YAML: {e}") from e
    if not isinstance(doc, dict):
        raise ProblemFileError(f"{path}: top level must be a mapping")
    return doc


def load_run_inputs(path: Union[str, Path]) -> ProblemFile:
    """Parse a problem file into a ProblemSpec plus tuning, initial data and simulation overrides."""
    doc = _read(path)
    name = str(doc.get("name") or Path(path).stem)
    problem = ProblemFile(
        spec=_spec(doc, name),
        tuning=_tuning(doc),
        initial=_initial(doc),
        simulation=_simulation(doc),
        source=str(path),
    )
    logger.info(f"Loaded problem '{name}' from {path}")
    return problem


def load_problem(path: Union[str, Path]) -> ProblemSpec:
    return load_run_inputs(path).spec


# ─── Saving ───


def _fraction_out(value: Fraction):
    return value.numerator if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


def problem_to_dict(problem: ProblemFile) -> dict:
    spec = problem.spec
    equation = {
        "alpha": _fraction_out(spec.alpha),
        "r": unparse(spec.r),
        "p": unparse(spec.p),
        "p_hat": unparse(spec.p_hat),
        "q": unparse(spec.q),
        "f_coef": unparse(spec.f_form.coef),
        "a": unparse(spec.a),
        "a_k": unparse(spec.a_family),
        "s": spec.s,
        "m": unparse(spec.m),
        "eta": unparse(spec.eta),
    }
    if isinstance(spec.f_form, CustomNonlinearity):
        equation["f_exponent"] = _fraction_out(spec.f_form.exponent)

    if isinstance(spec.bc, Robin):
        boundary = {"kind": "robin", "psi": unparse(spec.bc.psi)}
    else:
        boundary = {"kind": "dirichlet"}

    if isinstance(spec.domain, Interval):
        domain = {"x_lo": spec.domain.x_lo, "x_hi": spec.domain.x_hi}
    else:
        domain = {"lows": list(spec.domain.lows), "highs": list(spec.domain.highs)}

    tuning = {"b": unparse(problem.tuning.b), "tau": unparse(problem.tuning.tau), "beta": problem.tuning.beta}
    for key in ("t_star", "ladder_start"):
        if getattr(problem.tuning, key) is not None:
            tuning[key] = getattr(problem.tuning, key)
    if problem.tuning.ladder_ratio != TuningParams().ladder_ratio:
        tuning["ladder_ratio"] = problem.tuning.ladder_ratio

    doc = {
        "name": spec.name,
        "equation": equation,
        "boundary": boundary,
        "domain": domain,
        "time": {"t0": spec.t0},
        "tuning": tuning,
    }
    if problem.initial is not None:
        doc["initial"] = {"u0": unparse(problem.initial[0]), "u1": unparse(problem.initial[1])}
    if problem.simulation:
        doc["simulation"] = dict(problem.simulation)
    return doc


def save_problem(problem: Union[ProblemFile, ProblemSpec], path: Union[str, Path]) -> str:
    """Write a problem file with canonical (sorted) key order."""
    if isinstance(problem, ProblemSpec):
        problem = ProblemFile(spec=problem)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(problem_to_dict(problem), sort_keys=True, default_flow_style=False))
    logger.info(f"Saved problem '{problem.spec.name}' to {path}")
    return str(path)
