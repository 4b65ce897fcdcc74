"""
Numeric check of the generalized Riccati identity

    w = b·r·v′/v,   w′ = r·v′·(b/v)′ + (r·v′)′·b/v

on a simulated trajectory. Used as a test oracle, not as a criterion.
"""

import logging
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from numerics.expr import ExprAst, as_function
from problem.model import ProblemSpec
from simulation.reduced import Trajectory

logger = logging.getLogger(__name__)


class RiccatiDomainError(ValueError):
    """Raised when the trajectory is not positive at the evaluation point."""


def _central(fn: Callable[[float], float], t: float, h: float) -> float:
    return (fn(t + h) - fn(t - h)) / (2 * h)


def riccati_residual(v: Trajectory, b: ExprAst, spec: ProblemSpec, t: float, h: Optional[float] = None) -> float:
    """
    w′(t) − [r v′ (b/v)′ + (r v′)′ b/v](t), all derivatives by central
    differences on cubic splines of v and v′.
    """
    v_spline = CubicSpline(v.t, v.v)
    vp_spline = CubicSpline(v.t, v.vprime)
    if float(v_spline(t)) <= 0:
        raise RiccatiDomainError(f"trajectory must be positive at t={t}, got {float(v_spline(t))}")

    step = h if h is not None else 1e-4 * max(1.0, abs(t))
    if t - step < v.t[0] or t + step > v.t[-1]:
        raise ValueError(f"t={t} too close to the trajectory ends for step {step}")

    r_fn = as_function(spec.r)
    b_fn = as_function(b)

    def w(s):
        return b_fn(s) * r_fn(s) * float(vp_spline(s)) / float(v_spline(s))

    def b_over_v(s):
        return b_fn(s) / float(v_spline(s))

    def r_vp(s):
        return r_fn(s) * float(vp_spline(s))

    lhs = _central(w, t, step)
    rhs = r_vp(t) * _central(b_over_v, t, step) + _central(r_vp, t, step) * b_over_v(t)
    return float(lhs - rhs)
