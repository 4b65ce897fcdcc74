"""
Oscillation criteria for the damped equation.

Each check_theorem_* function builds its own DerivedCoefficients, evaluates
the conditions of one criterion and returns a CriterionReport. A report is
Oscillatory only when every required condition Holds; Fails and
Inconclusive never claim non-oscillation.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from numerics.expr import as_function, diff_numeric
from numerics.quad import (
    BracketError,
    CumulativeIntegral,
    DivergenceVerdict,
    QuadratureError,
    classify_improper,
    invert_monotone,
)
from criteria.derived import DerivedCoefficients, TuningError, TuningParams
from problem.model import ProblemSpec

logger = logging.getLogger(__name__)

HOLDS = "Holds"
FAILS = "Fails"
INCONCLUSIVE = "Inconclusive"
OSCILLATORY = "Oscillatory"

SLACK = 1e-12
INV_E = 1.0 / math.e

_NUMERIC_ERRORS = (ArithmeticError, ValueError, QuadratureError)


@dataclass
class ConditionEntry:
    label: str
    verdict: str
    evidence: dict = field(default_factory=dict)
    note: str = ""

    def to_dict(self) -> dict:
        return {"label": self.label, "verdict": self.verdict, "evidence": self.evidence, "note": self.note}


@dataclass
class CriterionReport:
    theorem_id: str
    conditions: list[ConditionEntry]
    overall: str
    case: Optional[int] = None
    parameters: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def summary_line(self) -> str:
        if self.case is not None:
            return f"case ({self.case}): {self.overall}"
        return self.overall

    def condition(self, label_prefix: str) -> ConditionEntry:
        for c in self.conditions:
            if c.label.startswith(label_prefix):
                return c
        raise KeyError(label_prefix)

    def to_dict(self) -> dict:
        return {
            "theorem_id": self.theorem_id,
            "overall": self.overall,
            "case": self.case,
            "summary": self.summary_line(),
            "conditions": [c.to_dict() for c in self.conditions],
            "parameters": self.parameters,
            "notes": self.notes,
        }


def _overall(conditions: list[ConditionEntry]) -> str:
    return OSCILLATORY if conditions and all(c.verdict == HOLDS for c in conditions) else INCONCLUSIVE


def _sample_grid(derived: DerivedCoefficients, start: float, n: int = 64) -> np.ndarray:
    t_max = derived.params.probes.t_max(derived.spec.t0)
    return np.geomspace(start, t_max, n)


# ─── Shared condition builders ───


def divergence_condition(label: str, integrand: Callable, start: float, derived: DerivedCoefficients) -> ConditionEntry:
    """Holds when ∫_start^∞ integrand diverges to +∞, Fails when it converges."""
    try:
        samples = np.asarray(integrand(_sample_grid(derived, start)), dtype=float)
    except _NUMERIC_ERRORS as e:
        return ConditionEntry(label, INCONCLUSIVE, note=f"integrand evaluation failed: {e}")

    if np.all(samples <= SLACK):
        return ConditionEntry(
            label, FAILS,
            evidence={"max_sample": float(np.max(samples))},
            note="integrand is non-positive on every sample and cannot diverge to +inf",
        )

    verdict = classify_improper(integrand, start, derived.params.probes)
    outcome = HOLDS if verdict.divergent else FAILS if verdict.convergent else INCONCLUSIVE
    return ConditionEntry(label, outcome, evidence=verdict.to_dict(), note=verdict.describe())


def damping_condition(derived: DerivedCoefficients) -> ConditionEntry:
    """∫ exp(−∫ p1) = ∞."""
    entry = divergence_condition("damping weight exp(-int p1) not integrable", derived.damping_weight, derived.base, derived)
    try:
        damping = np.asarray(derived.min_damping(_sample_grid(derived, derived.base)))
        if np.all(damping <= SLACK):
            entry.note = (entry.note + "; " if entry.note else "") + (
                "min p_hat <= 0 on every sample: weight >= 1, condition holds by comparison"
            )
    except _NUMERIC_ERRORS:
        pass
    return entry


def nonnegative_damping(derived: DerivedCoefficients) -> ConditionEntry:
    """Hypothesis p̂ ≥ 0 required by the first two criteria."""
    label = "p_hat >= 0 (sampled)"
    ts = _sample_grid(derived, derived.base)
    try:
        damping = np.atleast_1d(derived.min_damping(ts))
    except _NUMERIC_ERRORS as e:
        return ConditionEntry(label, INCONCLUSIVE, note=f"evaluation failed: {e}")
    bad = np.nonzero(damping < -SLACK)[0]
    if bad.size:
        i = int(bad[0])
        return ConditionEntry(
            label, INCONCLUSIVE,
            evidence={"witness": {"t": float(ts[i]), "min_p_hat": float(damping[i])}},
            note="hypothesis violation: negative damping sampled",
        )
    return ConditionEntry(label, HOLDS, evidence={"min_sample": float(np.min(damping))})


# ─── Theorem 2.1 ───


def _q_tail(derived: DerivedCoefficients):
    """t ↦ ∫_t^∞ Q, plus the verdict it came from."""
    verdict = classify_improper(derived.Q, derived.base, derived.params.probes)
    if verdict.divergent:
        return (lambda t: math.inf), verdict
    if verdict.convergent:
        cumulative = CumulativeIntegral(derived.Q, derived.base)
        limit = verdict.limit_estimate
        return (lambda t: max(limit - cumulative(t), 0.0)), verdict
    return (lambda t: 0.0), verdict


def eventual_inequality(derived: DerivedCoefficients) -> ConditionEntry:
    """
    m⁻¹(t)∫_T^t (s−T)Q(s)m(s)ds + (t−T)∫_t^∞ Q > 1 for all sampled t in
    [2T, T_max], for some T on the ladder.
    """
    label = "eventual inequality m^-1(t) int_T^t (s-T) Q m ds + (t-T) int_t^inf Q > 1"
    spec, params = derived.spec, derived.params
    t0 = spec.t0
    t_max = params.probes.t_max(t0)

    try:
        Q_samples = np.asarray(derived.Q(_sample_grid(derived, t0)))
        tail, tail_verdict = _q_tail(derived)
    except _NUMERIC_ERRORS as e:
        return ConditionEntry(label, INCONCLUSIVE, note=f"evaluation failed: {e}")

    note = ""
    if not (tail_verdict.divergent or tail_verdict.convergent):
        if np.any(Q_samples < 0):
            return ConditionEntry(label, INCONCLUSIVE, evidence={"tail": tail_verdict.to_dict()},
                                  note="tail of Q undecided and Q takes negative values")
        note = "tail of Q undecided; lower bound 0 used"

    sQm = CumulativeIntegral(lambda s: s * derived.Q(s) * derived.m(s), t0)
    Qm = CumulativeIntegral(lambda s: derived.Q(s) * derived.m(s), t0)

    rows = []
    T = params.ladder_start if params.ladder_start is not None else t0
    holds = False
    while 2 * T < t_max:
        ts = np.geomspace(2 * T, t_max, params.scan_points)
        moment = (sQm(ts) - sQm(T)) - T * (Qm(ts) - Qm(T))
        lhs = np.empty_like(ts)
        for i, t in enumerate(ts):
            try:
                m_inv = invert_monotone(spec.m, float(t), (t0, float(t)))
            except (BracketError, *_NUMERIC_ERRORS):
                lhs[i] = math.nan
                continue
            lhs[i] = m_inv * moment[i] + (t - T) * tail(float(t))

        ok = bool(np.all(lhs > 1 + SLACK))
        rows.append({"T": float(T), "min_lhs": float(np.nanmin(lhs)) if np.any(~np.isnan(lhs)) else None, "holds": ok})
        logger.debug(f"ladder T={T:.6g}: min lhs {rows[-1]['min_lhs']}, holds={ok}")
        if ok:
            holds = True
            break
        T *= params.ladder_ratio

    evidence = {"ladder": rows, "t_max": t_max, "tail": tail_verdict.to_dict()}
    if holds:
        return ConditionEntry(label, HOLDS, evidence=evidence, note=note)
    return ConditionEntry(label, FAILS, evidence=evidence,
                          note=note or "no ladder T makes the inequality hold on every sample")


def check_theorem_2_1(spec: ProblemSpec, params: Optional[TuningParams] = None) -> CriterionReport:
    derived = DerivedCoefficients(spec, params)
    logger.info(f"Theorem 2.1 on {spec.name or 'problem'}")

    conditions = [
        damping_condition(derived),
        divergence_condition("int s Q(s) ds diverges", lambda s: s * derived.Q(s), spec.t0, derived),
        eventual_inequality(derived),
    ]
    hypothesis = nonnegative_damping(derived)
    notes = []
    if hypothesis.verdict != HOLDS:
        conditions.insert(0, hypothesis)
        notes.append(hypothesis.note)

    return CriterionReport("2.1", conditions, _overall(conditions), parameters=derived.params.to_dict(), notes=notes)


# ─── Theorem 2.2 ───


def advanced_surrogate(Q1: Callable, m_tau: Callable, samples: np.ndarray) -> tuple[str, dict]:
    """
    Sufficient test that v'(t) > Q1(t)·v(m(τ(t))) has no positive solution:
    min over samples of ∫_t^{m(τ(t))} Q1 must exceed 1/e.

    Returns:
        (verdict, evidence) with verdict Holds or Inconclusive.
    """
    samples = np.asarray(samples, dtype=float)
    targets = np.asarray(m_tau(samples), dtype=float)
    behind = np.nonzero(targets < samples - SLACK * (1 + np.abs(samples)))[0]
    if behind.size:
        i = int(behind[0])
        return INCONCLUSIVE, {"witness": {"t": float(samples[i]), "m_tau": float(targets[i])},
                              "reason": "m(tau(t)) < t"}

    cumulative = CumulativeIntegral(Q1, float(np.min(samples)), rtol=1e-6)
    window_integrals = cumulative(targets) - cumulative(samples)
    i = int(np.argmin(window_integrals))
    evidence = {
        "liminf_estimate": float(window_integrals[i]),
        "at_t": float(samples[i]),
        "threshold": INV_E,
        "samples": [[float(t), float(v)] for t, v in zip(samples, window_integrals)],
    }
    verdict = HOLDS if window_integrals[i] > INV_E + SLACK else INCONCLUSIVE
    return verdict, evidence


def tau_admissible(derived: DerivedCoefficients) -> ConditionEntry:
    """τ > 0, τ ≤ t, τ′ ≥ 0, τ″ ≤ 0 on a sample grid."""
    label = "tau admissible (tau <= t, tau' >= 0, tau'' <= 0)"
    tau_expr = derived.params.tau
    ts = _sample_grid(derived, derived.base)
    try:
        tau = derived.tau(ts)
        d1 = derived.tau_prime(ts)
        h = 1e-3 * np.maximum(1.0, ts)
        f = as_function(tau_expr)
        d2 = (f(ts + h) - 2 * f(ts) + f(ts - h)) / h**2
    except _NUMERIC_ERRORS as e:
        return ConditionEntry(label, INCONCLUSIVE, note=f"evaluation failed: {e}")

    checks = [
        ("tau(t) > 0", tau <= 0, tau),
        ("tau(t) <= t", tau > ts + SLACK * (1 + ts), tau),
        ("tau'(t) >= 0", d1 < -1e-9, d1),
        ("tau''(t) <= 0", d2 > 1e-6, d2),
    ]
    for name, bad, values in checks:
        idx = np.nonzero(bad)[0]
        if idx.size:
            i = int(idx[0])
            return ConditionEntry(
                label, INCONCLUSIVE,
                evidence={"witness": {"constraint": name, "t": float(ts[i]), "value": float(values[i])}},
                note=f"{name} fails at t={ts[i]:.6g}",
            )
    return ConditionEntry(label, HOLDS)


def check_theorem_2_2(spec: ProblemSpec, params: Optional[TuningParams] = None) -> CriterionReport:
    derived = DerivedCoefficients(spec, params)
    logger.info(f"Theorem 2.2 on {spec.name or 'problem'}")

    conditions = [tau_admissible(derived), damping_condition(derived)]
    label = "no positive solution of v' > Q1 v(m(tau(t))) (sufficient surrogate: liminf int Q1 > 1/e)"
    if conditions[0].verdict == HOLDS:
        probes = derived.params.probes
        t_max = probes.t_max(spec.t0)
        tail_start = spec.t0 * 2.0 ** (probes.doublings // 2)
        samples = np.geomspace(tail_start, t_max, derived.params.tail_samples)
        try:
            verdict, evidence = advanced_surrogate(
                derived.Q1, lambda t: derived.m(derived.tau(t)), samples
            )
            conditions.append(ConditionEntry(label, verdict, evidence=evidence))
        except _NUMERIC_ERRORS as e:
            conditions.append(ConditionEntry(label, INCONCLUSIVE, note=f"evaluation failed: {e}"))
    else:
        conditions.append(ConditionEntry(label, INCONCLUSIVE, note="tau constraints not met"))

    hypothesis = nonnegative_damping(derived)
    notes = []
    if hypothesis.verdict != HOLDS:
        conditions.insert(0, hypothesis)
        notes.append(hypothesis.note)

    return CriterionReport("2.2", conditions, _overall(conditions), parameters=derived.params.to_dict(), notes=notes)


# ─── Theorem 2.3 ───


def _check_b(derived: DerivedCoefficients) -> None:
    ts = _sample_grid(derived, derived.base)
    b = np.asarray(as_function(derived.params.b)(ts))
    if np.any(b <= 0):
        i = int(np.nonzero(b <= 0)[0][0])
        raise TuningError(f"b must be positive; b({ts[i]:.6g}) = {b[i]:.6g}")


def bq_riccati_integrand(derived: DerivedCoefficients) -> Callable:
    """b·Q − (b′/b − p1)²·b/4."""
    b_fn = as_function(derived.params.b)
    b_expr = derived.params.b

    def integrand(s):
        b = b_fn(s)
        ratio = diff_numeric(b_expr, "t", s) / b
        return b * derived.Q(s) - (ratio - derived.p1(s)) ** 2 * b / 4

    return integrand


def check_theorem_2_3(spec: ProblemSpec, params: Optional[TuningParams] = None) -> CriterionReport:
    derived = DerivedCoefficients(spec, params)
    logger.info(f"Theorem 2.3 on {spec.name or 'problem'}")
    _check_b(derived)

    conditions = [
        damping_condition(derived),
        divergence_condition(
            "int [b Q - (b'/b - p1)^2 b/4] ds diverges", bq_riccati_integrand(derived), spec.t0, derived
        ),
    ]
    return CriterionReport("2.3", conditions, _overall(conditions), parameters=derived.params.to_dict())


# ─── Theorem 2.4 ───


def bqstar_riccati_integrand(derived: DerivedCoefficients) -> Callable:
    """b·Q* − r·b·(b′/b − h/r)²/4."""
    b_fn = as_function(derived.params.b)
    b_expr = derived.params.b

    def integrand(s):
        b = b_fn(s)
        r = derived.r(s)
        ratio = diff_numeric(b_expr, "t", s) / b
        return b * derived.Q_star(s) - 0.25 * r * b * (ratio - derived.h(s) / r) ** 2

    return integrand


def nested_integrands(derived: DerivedCoefficients, T2: Optional[float] = None):
    """
    Inner s ↦ Q*(s)·θ(m(s))·exp(∫^s h/r) and outer
    τ ↦ exp(−∫^τ h/r)/r(τ) · ∫_{T2}^τ inner.
    """
    T2 = derived.t_star if T2 is None else T2
    weight = derived.h_weight

    def inner(s):
        return derived.Q_star(s) * derived.theta(derived.m(s)) * weight.inverse(s)

    running = CumulativeIntegral(inner, T2)

    def outer(tau):
        return running(tau) * weight(tau) / derived.r(tau)

    return inner, outer


def check_theorem_2_4(spec: ProblemSpec, params: Optional[TuningParams] = None) -> CriterionReport:
    derived = DerivedCoefficients(spec, params)
    logger.info(f"Theorem 2.4 on {spec.name or 'problem'}")
    _check_b(derived)
    t_star = derived.t_star

    J: DivergenceVerdict = derived.J_verdict
    j_label = "J = int r^-1 exp(-int h/r) ds"
    riccati = divergence_condition(
        "int [b Q* - r b (b'/b - h/r)^2 / 4] ds diverges", bqstar_riccati_integrand(derived), t_star, derived
    )
    parameters = {**derived.params.to_dict(), "T_star": t_star, "T1": t_star, "T2": t_star, "T3": t_star}

    if J.divergent:
        conditions = [ConditionEntry(j_label + " diverges", HOLDS, J.to_dict(), J.describe()), riccati]
        return CriterionReport("2.4", conditions, _overall(conditions), case=1, parameters=parameters)

    if J.convergent:
        conditions = [ConditionEntry(j_label + " converges", HOLDS, J.to_dict(), J.describe()), riccati]
        nested_label = "nested int theta(m) Q* weighted integral diverges"
        try:
            _, outer = nested_integrands(derived)
            conditions.append(divergence_condition(nested_label, outer, t_star, derived))
        except _NUMERIC_ERRORS as e:
            conditions.append(ConditionEntry(nested_label, INCONCLUSIVE, note=f"theta evaluation failed: {e}"))
        return CriterionReport("2.4", conditions, _overall(conditions), case=2, parameters=parameters)

    conditions = [ConditionEntry(j_label + " classified", INCONCLUSIVE, J.to_dict(), J.describe()), riccati]
    return CriterionReport("2.4", conditions, INCONCLUSIVE, parameters=parameters,
                           notes=["J could not be classified; neither case applies"])


THEOREMS: dict[str, Callable[[ProblemSpec, Optional[TuningParams]], CriterionReport]] = {
    "2.1": check_theorem_2_1,
    "2.2": check_theorem_2_2,
    "2.3": check_theorem_2_3,
    "2.4": check_theorem_2_4,
}
