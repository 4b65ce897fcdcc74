"""
Spatial reduction of a PDE field to the scalar v(t):

    v = (1/α) ∫ u^α dx          (Robin)
    v = (1/α) ∫ φ(x) u^α dx     (Dirichlet, φ first eigenfunction, max φ = 1)
"""

import math
import logging
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.integrate import simpson

from numerics.expr import spow
from problem.model import BoundaryCondition, Box, Dirichlet, Domain, Interval
from simulation.reduced import Trajectory

logger = logging.getLogger(__name__)


class ReductionError(ValueError):
    """Raised when a trace cannot be reduced."""


class DomainShapeError(ValueError):
    """Raised for domains without a closed-form first eigenpair."""


@dataclass(frozen=True)
class EigenWeight:
    domain: Domain
    phi: Callable
    lambda1: float


def _axis_bounds(domain: Domain):
    if isinstance(domain, Interval):
        return [domain.x_lo], [domain.x_hi]
    if isinstance(domain, Box):
        return list(domain.lows), list(domain.highs)
    raise DomainShapeError(f"unsupported domain shape: {type(domain).__name__}")


def dirichlet_weight(domain: Domain) -> EigenWeight:
    """First Dirichlet eigenpair of −Δ on an interval or box, φ normalised to max 1."""
    lows, highs = _axis_bounds(domain)
    lengths = [hi - lo for lo, hi in zip(lows, highs)]
    if any(not L > 0 for L in lengths):
        raise DomainShapeError(f"degenerate domain with side lengths {lengths}")

    def phi(*xs):
        value = 1.0
        for x, lo, L in zip(xs, lows, lengths):
            value = value * np.sin(math.pi * (np.asarray(x, dtype=float) - lo) / L)
        return value

    lambda1 = sum((math.pi / L) ** 2 for L in lengths)
    weight = EigenWeight(domain, phi, lambda1)

    residual = eigen_residual(weight)
    if residual > 1e-4 * (1 + lambda1):
        raise RuntimeError(f"eigenpair check failed: residual {residual:.3e}")
    return weight


def eigen_residual(weight: EigenWeight, n: int = 9) -> float:
    """max |Δφ + λ1 φ| at interior sample points, Laplacian by central differences."""
    lows, highs = _axis_bounds(weight.domain)
    dims = len(lows)
    worst = 0.0
    for frac in np.linspace(0.1, 0.9, n):
        point = [lo + frac * (hi - lo) for lo, hi in zip(lows, highs)]
        lap = 0.0
        for axis in range(dims):
            h = 1e-4 * (highs[axis] - lows[axis])
            plus, minus = list(point), list(point)
            plus[axis] += h
            minus[axis] -= h
            lap += (weight.phi(*plus) - 2 * weight.phi(*point) + weight.phi(*minus)) / h**2
        worst = max(worst, abs(float(lap + weight.lambda1 * weight.phi(*point))))
    return worst


def reduce_trace(trace, alpha: Union[float, "Fraction"], bc: BoundaryCondition) -> Trajectory:
    """
    v(t) = (1/α) ∫ (φ) u^α dx by composite Simpson on the trace's grid,
    v′ by centred differences in time.
    """
    x = np.asarray(trace.x, dtype=float)
    t = np.asarray(trace.t, dtype=float)
    u = np.asarray(trace.u, dtype=float)
    if len(x) < 3:
        raise ReductionError(f"reduction needs at least 3 spatial nodes, got {len(x)}")
    if len(t) < 2:
        raise ReductionError("reduction needs at least 2 time levels")

    a = float(alpha)
    if isinstance(bc, Dirichlet):
        weight = dirichlet_weight(Interval(float(x[0]), float(x[-1])))
        phi = weight.phi(x)
    else:
        phi = np.ones_like(x)

    v = simpson(phi[None, :] * spow(u, a), x=x, axis=1) / a
    vprime = np.gradient(v, t, edge_order=2 if len(t) >= 3 else 1)
    return Trajectory(t=t, v=v, vprime=vprime, iterations=0, scheme="simpson-reduction", closure="none")
