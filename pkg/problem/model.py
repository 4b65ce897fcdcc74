"""
Data model for one damped quasilinear wave equation with deviating arguments

    r(t)(u^{α-1}u_t)_t-style leading term, damping p̂(x,t)u^{α-1}u_t,
    forcing f(u(x,m(t)),x,t), diffusion a(t)Δu + Σ a_k(t)Δu(x,η(t)),

together with its boundary condition and spatial domain.
"""

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union

from numerics.expr import ExprAst, free_variables, unparse


class ProblemSpecError(ValueError):
    """Raised when a problem description violates a structural invariant."""


class UnknownExampleError(ValueError):
    pass


# ─── Variants ───


@dataclass(frozen=True)
class PowerLaw:
    """f = coef(t)·u^α."""

    coef: ExprAst


@dataclass(frozen=True)
class CustomNonlinearity:
    """f = coef(t)·spow(u, exponent)."""

    coef: ExprAst
    exponent: Fraction


@dataclass(frozen=True)
class Robin:
    """∂u/∂γ + ψ(x,t)u = 0 on the boundary."""

    psi: ExprAst


@dataclass(frozen=True)
class Dirichlet:
    pass


@dataclass(frozen=True)
class Interval:
    x_lo: float
    x_hi: float

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise ProblemSpecError(f"degenerate interval [{self.x_lo}, {self.x_hi}]")

    @property
    def length(self) -> float:
        return self.x_hi - self.x_lo

    @property
    def lows(self) -> tuple[float, ...]:
        return (self.x_lo,)

    @property
    def highs(self) -> tuple[float, ...]:
        return (self.x_hi,)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box. Coefficients see the first axis as x."""

    lows: tuple[float, ...]
    highs: tuple[float, ...]

    def __post_init__(self):
        if len(self.lows) != len(self.highs) or not self.lows:
            raise ProblemSpecError("box needs matching non-empty lows/highs")
        for lo, hi in zip(self.lows, self.highs):
            if not lo < hi:
                raise ProblemSpecError(f"degenerate box side [{lo}, {hi}]")

    @property
    def x_lo(self) -> float:
        return self.lows[0]

    @property
    def x_hi(self) -> float:
        return self.highs[0]


Nonlinearity = Union[PowerLaw, CustomNonlinearity]
BoundaryCondition = Union[Robin, Dirichlet]
Domain = Union[Interval, Box]


def parse_alpha(value) -> Fraction:
    """Read α from an int, float or 'p/q' string and check it is a ratio of odd integers."""
    try:
        alpha = Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError):
        raise ProblemSpecError(f"alpha must be a rational number, got {value!r}") from None
    if alpha <= 0 or alpha.numerator % 2 == 0 or alpha.denominator % 2 == 0:
        raise ProblemSpecError(f"alpha must be a ratio of positive odd integers, got {alpha}")
    return alpha


@dataclass(frozen=True)
class ProblemSpec:
    """
    One instance of the equation. All functions are expression ASTs:
    r, q, a, m, eta, f coefficient in t; p, p_hat in (x, t); a_family in (k, t);
    Robin psi in (x, t).
    """

    alpha: Fraction
    r: ExprAst
    p: ExprAst
    p_hat: ExprAst
    q: ExprAst
    a: ExprAst
    a_family: ExprAst
    s: int
    m: ExprAst
    eta: ExprAst
    f_form: Nonlinearity
    bc: BoundaryCondition
    domain: Domain
    t0: float
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha", parse_alpha(self.alpha))
        if not self.t0 > 0:
            raise ProblemSpecError(f"t0 must be positive, got {self.t0}")
        if self.s < 0:
            raise ProblemSpecError(f"s must be non-negative, got {self.s}")

        allowed = {
            "r": {"t"}, "q": {"t"}, "a": {"t"}, "m": {"t"}, "eta": {"t"},
            "p": {"x", "t"}, "p_hat": {"x", "t"}, "a_family": {"k", "t"},
        }
        for name, variables in allowed.items():
            extra = free_variables(getattr(self, name)) - variables
            if extra:
                raise ProblemSpecError(
                    f"{name} = {unparse(getattr(self, name))} uses {sorted(extra)}; allowed {sorted(variables)}"
                )
        if free_variables(self.f_form.coef) - {"t"}:
            raise ProblemSpecError("f coefficient may only depend on t")
        if isinstance(self.bc, Robin) and free_variables(self.bc.psi) - {"x", "t"}:
            raise ProblemSpecError("psi may only depend on x and t")

    @property
    def alpha_float(self) -> float:
        return float(self.alpha)

    @property
    def f_exponent(self) -> Fraction:
        if isinstance(self.f_form, CustomNonlinearity):
            return self.f_form.exponent
        return self.alpha

    def with_changes(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)
