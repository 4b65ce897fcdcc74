"""
Derived coefficient functions used by the oscillation criteria.

Every function here accepts a float or a numpy array of times and returns
the same kind. Running integrals are served from CumulativeIntegral grids
that are built lazily per DerivedCoefficients instance.
"""

import math
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from numerics.expr import ExprAst, as_function, diff_numeric, evaluate, free_variables, parse_expression, unparse
from numerics.quad import (
    CumulativeIntegral,
    DivergenceVerdict,
    ExpWeight,
    ProbeSettings,
    classify_improper,
    exp_weight,
)
from problem.model import ProblemSpec

logger = logging.getLogger(__name__)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class TuningError(ValueError):
    """Raised for invalid tuning parameters (b, tau, beta, probe controls)."""


@dataclass(frozen=True)
class TuningParams:
    """
    Free choices of the criteria.

    b: weight function of the Riccati-type conditions (default 1).
    tau: retarded argument of the first-order comparison (default t).
    beta: width of the Q1 averaging window, must be positive.
    t_star: lower limit of the h/r weight and the nested integrals (default t0).
    ladder_start / ladder_ratio: the T ladder for the eventual inequality.
    force_undamped: evaluate every condition with p_hat ≡ 0.
    damping_scale: multiply p_hat pointwise by this factor.
    """

    b: ExprAst = field(default_factory=lambda: parse_expression("1"))
    tau: ExprAst = field(default_factory=lambda: parse_expression("t"))
    beta: float = 1.0
    probes: ProbeSettings = field(default_factory=ProbeSettings)
    t_star: Optional[float] = None
    ladder_start: Optional[float] = None
    ladder_ratio: float = 2.0
    scan_points: int = 48
    tail_samples: int = 64
    x_coarse: int = 33
    force_undamped: bool = False
    damping_scale: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise TuningError(f"beta must be positive, got {self.beta}")
        if not self.ladder_ratio > 1:
            raise TuningError(f"ladder_ratio must exceed 1, got {self.ladder_ratio}")
        if self.damping_scale < 0:
            raise TuningError(f"damping_scale must be non-negative, got {self.damping_scale}")
        if free_variables(self.b) - {"t"} or free_variables(self.tau) - {"t"}:
            raise TuningError("b and tau may only depend on t")
        if self.scan_points < 2 or self.tail_samples < 2 or self.x_coarse < 3:
            raise TuningError("scan_points, tail_samples need >= 2 and x_coarse >= 3")

    def to_dict(self) -> dict:
        return {
            "b": unparse(self.b),
            "tau": unparse(self.tau),
            "beta": self.beta,
            "t_star": self.t_star,
            "ladder_start": self.ladder_start,
            "ladder_ratio": self.ladder_ratio,
            "force_undamped": self.force_undamped,
            "damping_scale": self.damping_scale,
            "probes": {
                "tol": self.probes.tol,
                "tail_tol": self.probes.tail_tol,
                "doublings": self.probes.doublings,
                "r2_threshold": self.probes.r2_threshold,
            },
        }


# ─── Spatial minimum ───


def spatial_minimum(expr: ExprAst, x_lo: float, x_hi: float, t, n_coarse: int = 33, iterations: int = 40):
    """
    min over x in [x_lo, x_hi] of expr(x, t), per t.

    Coarse grid scan followed by golden-section refinement in the bracket
    around the best grid point. Skips both stages when expr has no x.
    """
    scalar = np.ndim(t) == 0
    ts = np.atleast_1d(np.asarray(t, dtype=float))

    if "x" not in free_variables(expr):
        out = evaluate(expr, {"x": x_lo, "t": ts})
        return float(out[0]) if scalar else out

    xs = np.linspace(x_lo, x_hi, n_coarse)
    grid = evaluate(expr, {"x": xs[:, None], "t": ts[None, :]})
    j = np.argmin(grid, axis=0)
    best = grid[j, np.arange(len(ts))]

    a = xs[np.maximum(j - 1, 0)]
    b = xs[np.minimum(j + 1, n_coarse - 1)]
    for _ in range(iterations):
        c = b - _GOLDEN * (b - a)
        d = a + _GOLDEN * (b - a)
        fc = evaluate(expr, {"x": c, "t": ts})
        fd = evaluate(expr, {"x": d, "t": ts})
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        best = np.minimum(best, np.minimum(fc, fd))

    return float(best[0]) if scalar else best


# ─── Derived coefficients ───


class DerivedCoefficients:
    """
    Q, p1, Q_star, h, theta, Q0, Q1 for one problem and one set of tuning
    parameters. Not shared across threads; each theorem check builds its own.
    """

    def __init__(self, spec: ProblemSpec, params: Optional[TuningParams] = None):
        self.spec = spec
        self.params = params or TuningParams()
        self.alpha = spec.alpha_float
        self.base = spec.t0
        self.t_star = self.params.t_star if self.params.t_star is not None else spec.t0

        self._r = as_function(spec.r)
        self._q = as_function(spec.q)
        self._m = as_function(spec.m)
        self._tau = as_function(self.params.tau)

    # basic pieces

    def r(self, t):
        return self._r(t)

    def m(self, t):
        return self._m(t)

    def tau(self, t):
        return self._tau(t)

    def r_prime(self, t):
        return diff_numeric(self.spec.r, "t", t)

    def tau_prime(self, t):
        return diff_numeric(self.params.tau, "t", t)

    def min_damping(self, t):
        """λ · min_x p̂(x, t), or 0 when damping is switched off."""
        if self.params.force_undamped:
            return 0.0 * np.asarray(t, dtype=float) if np.ndim(t) else 0.0
        lo, hi = self.spec.domain.x_lo, self.spec.domain.x_hi
        return self.params.damping_scale * spatial_minimum(self.spec.p_hat, lo, hi, t, self.params.x_coarse)

    # derived functions

    def p1(self, t):
        return self.min_damping(t) / self.r(t)

    def Q(self, t):
        return self.alpha * self._q(self.m(t)) / self.r(t)

    def Q_star(self, t):
        return self.alpha * self._q(self.m(t))

    def h(self, t):
        return self.min_damping(t) - self.r_prime(t)

    def h_over_r(self, t):
        return self.h(t) / self.r(t)

    def Q0(self, t):
        tau = self.tau(t)
        return np.minimum(self.Q(t), self.Q(tau) * self.tau_prime(t) ** 2)

    def Q1(self, t):
        c = self.q0_cumulative
        return c(np.asarray(t) + self.params.beta) - c(t)

    # weights and running integrals

    @cached_property
    def damping_weight(self) -> ExpWeight:
        """exp(−∫_{t0}^t p1), the integrand of the damping condition."""
        return exp_weight(self.p1, self.base)

    @cached_property
    def h_weight(self) -> ExpWeight:
        """exp(−∫_{T*}^t h/r)."""
        return exp_weight(self.h_over_r, self.t_star)

    @cached_property
    def q0_cumulative(self) -> CumulativeIntegral:
        return CumulativeIntegral(self.Q0, self.base)

    def J_integrand(self, t):
        return self.h_weight(t) / self.r(t)

    @cached_property
    def J_cumulative(self) -> CumulativeIntegral:
        return CumulativeIntegral(self.J_integrand, self.t_star)

    @cached_property
    def J_verdict(self) -> DivergenceVerdict:
        return classify_improper(self.J_integrand, self.t_star, self.params.probes)

    def theta(self, t):
        """
        ∫_t^∞ r⁻¹ exp(−∫_{T*}^τ h/r) dτ as J_∞ − C_J(t); +inf when J diverges,
        nan when the classification is inconclusive.
        """
        verdict = self.J_verdict
        if verdict.divergent:
            return math.inf if np.ndim(t) == 0 else np.full(np.shape(t), math.inf)
        if not verdict.convergent:
            return math.nan if np.ndim(t) == 0 else np.full(np.shape(t), math.nan)
        value = np.maximum(verdict.limit_estimate - self.J_cumulative(t), 0.0)
        return float(value) if np.ndim(value) == 0 else value


def derive_coefficients(spec: ProblemSpec, params: Optional[TuningParams] = None) -> DerivedCoefficients:
    return DerivedCoefficients(spec, params)


def damping_weight_samples(spec: ProblemSpec, params: Optional[TuningParams], ts) -> np.ndarray:
    """The damping-condition integrand exp(−∫ p1) sampled at ts."""
    derived = DerivedCoefficients(spec, params)
    return np.asarray(derived.damping_weight(np.asarray(ts, dtype=float)))
