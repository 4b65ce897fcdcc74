"""
Grid-sampled checks of the structural hypotheses H1–H3 plus the boundary
condition sign requirement. Verdicts are grid-limited evidence, never proof.
"""

import logging
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from numerics.expr import ExprAst, evaluate
from problem.model import CustomNonlinearity, PowerLaw, ProblemSpec, Robin

logger = logging.getLogger(__name__)

SATISFIED = "Satisfied"
VIOLATED = "Violated"
UNCHECKED = "Unchecked"

CHECK_TOL = 1e-12
MAX_WITNESSES = 5


@dataclass
class Witness:
    """A grid point where `lhs (op) rhs` fails."""

    inequality: str
    t: float
    x: Optional[float]
    lhs: float
    rhs: float
    strict: bool = False

    def fails(self) -> bool:
        if self.strict:
            return self.lhs <= self.rhs
        return self.lhs < self.rhs - CHECK_TOL


@dataclass
class HypothesisEntry:
    name: str
    verdict: str
    witnesses: list[Witness] = field(default_factory=list)
    reason: Optional[str] = None
    notes: list[str] = field(default_factory=list)

    def summary(self) -> str:
        if self.verdict == VIOLATED:
            w = self.witnesses[0]
            at = f"t={w.t:.6g}" + (f", x={w.x:.6g}" if w.x is not None else "")
            return f"{self.name}: Violated ({w.inequality} fails at {at}: {w.lhs:.6g} vs {w.rhs:.6g})"
        if self.verdict == UNCHECKED:
            return f"{self.name}: Unchecked ({self.reason})"
        return f"{self.name}: Satisfied"


@dataclass
class HypothesisReport:
    entries: dict[str, HypothesisEntry]
    grid: dict

    @property
    def all_satisfied(self) -> bool:
        return all(e.verdict == SATISFIED for e in self.entries.values())

    def violated(self) -> list[str]:
        return [name for name, e in self.entries.items() if e.verdict == VIOLATED]

    def to_dict(self) -> dict:
        return {"grid": self.grid, "entries": {name: asdict(e) for name, e in self.entries.items()}}


class _Collector:
    """Accumulates inequality failures for one hypothesis."""

    def __init__(self, name: str):
        self.entry = HypothesisEntry(name, SATISFIED)

    def check(self, label: str, lhs: np.ndarray, rhs, ts: np.ndarray, xs: Optional[np.ndarray] = None, strict=False):
        lhs = np.asarray(lhs, dtype=float)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), lhs.shape)
        bad = lhs <= rhs if strict else lhs < rhs - CHECK_TOL
        if not np.any(bad):
            return
        self.entry.verdict = VIOLATED
        for idx in np.argwhere(bad)[:MAX_WITNESSES]:
            idx = tuple(idx)
            t = float(np.broadcast_to(ts, lhs.shape)[idx])
            x = float(np.broadcast_to(xs, lhs.shape)[idx]) if xs is not None else None
            self.entry.witnesses.append(Witness(label, t, x, float(lhs[idx]), float(rhs[idx]), strict))

    def guard(self, fn: Callable[[], None]):
        try:
            fn()
        except (ArithmeticError, ValueError) as e:
            self.entry.verdict = UNCHECKED
            self.entry.reason = f"evaluation failed: {e}"
            logger.warning(f"{self.entry.name} unchecked: {e}")


def _successive_differences(expr: ExprAst, ts: np.ndarray) -> np.ndarray:
    v = evaluate(expr, {"t": ts})
    return np.diff(v)


def check_hypotheses(spec: ProblemSpec, t_range: tuple[float, float], n_t: int = 200, n_x: int = 20) -> HypothesisReport:
    """
    Sample H1, H2, H3 and the boundary sign condition on an n_x × n_t grid.

    Returns:
        HypothesisReport with one entry per hypothesis (H1, H2, H3, BC).
    """
    t_lo, t_hi = float(t_range[0]), float(t_range[1])
    if n_t < 2 or n_x < 2:
        raise ValueError(f"grid needs n_t, n_x >= 2, got {n_t}, {n_x}")
    if t_lo < spec.t0 or not t_hi > t_lo:
        raise ValueError(f"t_range must lie in [t0, inf) with t_lo < t_hi, got [{t_lo}, {t_hi}]")

    ts = np.linspace(t_lo, t_hi, n_t)
    xs = np.linspace(spec.domain.x_lo, spec.domain.x_hi, n_x)
    X, T = np.meshgrid(xs, ts, indexing="ij")
    alpha = spec.alpha_float

    # H1: positivity of r, a, a_k, p; p >= (alpha-1) r
    h1 = _Collector("H1")

    def run_h1():
        r = evaluate(spec.r, {"t": ts})
        h1.check("r(t) > 0", r, 0.0, ts, strict=True)
        h1.check("a(t) > 0", evaluate(spec.a, {"t": ts}), 0.0, ts, strict=True)
        for k in range(1, spec.s + 1):
            h1.check(f"a_{k}(t) > 0", evaluate(spec.a_family, {"k": float(k), "t": ts}), 0.0, ts, strict=True)
        p = evaluate(spec.p, {"x": X, "t": T})
        h1.check("p(x,t) > 0", p, 0.0, T, X, strict=True)
        h1.check("p(x,t) >= (alpha-1) r(t)", p, (alpha - 1) * r[None, :], T, X)
        h1.entry.notes.append("r in C^1 and continuity are not machine-checked")

    h1.guard(run_h1)

    # H2: deviating arguments
    h2 = _Collector("H2")

    def run_h2():
        m = evaluate(spec.m, {"t": ts})
        eta = evaluate(spec.eta, {"t": ts})
        h2.check("m(t) > 0", m, 0.0, ts, strict=True)
        h2.check("eta(t) > 0", eta, 0.0, ts, strict=True)
        h2.check("m(t) >= t", m, ts, ts)
        h2.check("m increasing", _successive_differences(spec.m, ts), 0.0, ts[1:])
        h2.check("eta increasing", _successive_differences(spec.eta, ts), 0.0, ts[1:])
        h2.entry.notes.append(
            f"m grows from {m[0]:.6g} to {m[-1]:.6g}, eta from {eta[0]:.6g} to {eta[-1]:.6g}; "
            "the limits m, eta -> inf are not machine-checkable"
        )

    h2.guard(run_h2)

    # H3: f bound
    h3 = _Collector("H3")

    def run_h3():
        q = evaluate(spec.q, {"t": ts})
        h3.check("q(t) > 0", q, 0.0, ts, strict=True)
        if isinstance(spec.f_form, PowerLaw):
            coef = evaluate(spec.f_form.coef, {"t": ts})
            h3.check("f coefficient >= q(t)", coef, q, ts)
            h3.entry.notes.append("strict f > q u^alpha is checked as coef(t) >= q(t)")
        elif isinstance(spec.f_form, CustomNonlinearity) and h3.entry.verdict == SATISFIED:
            h3.entry.verdict = UNCHECKED
            h3.entry.reason = (
                f"custom nonlinearity coef*u^{spec.f_form.exponent} has no sampled comparison with q(t)u^alpha"
            )

    h3.guard(run_h3)

    # BC: psi >= 0 on the boundary
    bc = _Collector("BC")
    if isinstance(spec.bc, Robin):
        psi = spec.bc.psi

        def run_bc():
            for x_end in (spec.domain.x_lo, spec.domain.x_hi):
                values = evaluate(psi, {"x": np.full_like(ts, x_end), "t": ts})
                bc.check(f"psi({x_end:g},t) >= 0", values, 0.0, ts, np.full_like(ts, x_end))

        bc.guard(run_bc)
    else:
        bc.entry.notes.append("Dirichlet condition has no sign requirement")

    entries = {c.entry.name: c.entry for c in (h1, h2, h3, bc)}
    for entry in entries.values():
        if entry.verdict == VIOLATED:
            logger.info(entry.summary())

    grid = {"t_range": [t_lo, t_hi], "n_t": n_t, "n_x": n_x, "x_range": [xs[0].item(), xs[-1].item()]}
    return HypothesisReport(entries=entries, grid=grid)
