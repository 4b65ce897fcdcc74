"""
Numeric integration engine.

Finite integrals go through QUADPACK (scipy.integrate.quad). Improper
integrals of the form limsup ∫_{t0}^T f are classified by probing partial
integrals on two schedules and fitting growth / extrapolation models.
Running integrals ∫_base^t f are served from a lazily extended knot grid
(CumulativeIntegral), which also backs exp_weight and nested integrals.
"""

import math
import logging
import threading
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize, stats

from numerics.expr import ExprAst, ExprDomainError, as_function

logger = logging.getLogger(__name__)

Integrand = Callable[[Union[float, np.ndarray]], Union[float, np.ndarray]]

OVERFLOW_LIMIT = 1e250

DIVERGENT = "Divergent"
CONVERGENT = "Convergent"
INCONCLUSIVE = "Inconclusive"


class QuadratureError(RuntimeError):
    """Raised when an integrand cannot be integrated (non-finite samples, failed refinement)."""


class BracketError(ValueError):
    """Raised when a value lies outside the image of the bracket."""


class _Overflow(QuadratureError):
    pass


@dataclass(frozen=True)
class ProbeSettings:
    """Controls for improper-integral classification."""

    tol: float = 1e-9
    tail_tol: float = 1e-6
    doublings: int = 16
    r2_threshold: float = 0.99
    max_ratio: float = 0.98
    schedules: tuple[str, ...] = ("geometric", "shifted")

    def points(self, t0: float, schedule: str) -> np.ndarray:
        """Probe points T_1 < T_2 < ... for one schedule (t0 itself excluded)."""
        i = np.arange(1, self.doublings + 1, dtype=float)
        if schedule == "geometric":
            return t0 * 2.0**i
        if schedule == "shifted":
            return t0 + 2.0 ** np.concatenate(([0.0], i))
        raise ValueError(f"Unknown probe schedule: {schedule}")

    def t_max(self, t0: float) -> float:
        return t0 * 2.0**self.doublings if t0 > 0 else t0 + 2.0**self.doublings

    def scaled(self, tol_factor: float = 1.0, extra_doublings: int = 0) -> "ProbeSettings":
        return ProbeSettings(
            tol=self.tol * tol_factor,
            tail_tol=self.tail_tol * tol_factor,
            doublings=self.doublings + extra_doublings,
            r2_threshold=self.r2_threshold,
            max_ratio=self.max_ratio,
            schedules=self.schedules,
        )


@dataclass
class DivergenceVerdict:
    """
    Three-way classification of an improper integral with its evidence.

    kind is one of Divergent / Convergent / Inconclusive. Divergent carries
    growth_model ("log", "power", "exp") and fit_r2; Convergent carries
    limit_estimate and err_estimate; Inconclusive carries reason.
    """

    kind: str
    growth_model: Optional[str] = None
    growth_exponent: Optional[float] = None
    fit_r2: Optional[float] = None
    limit_estimate: Optional[float] = None
    err_estimate: Optional[float] = None
    reason: Optional[str] = None
    schedule: str = ""
    probes: list[tuple[float, float]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def divergent(self) -> bool:
        return self.kind == DIVERGENT

    @property
    def convergent(self) -> bool:
        return self.kind == CONVERGENT

    def describe(self) -> str:
        if self.divergent:
            model = self.growth_model
            if model == "power":
                model = f"power({self.growth_exponent:.3g})"
            return f"Divergent{{{model}, r2={self.fit_r2:.4f}}}"
        if self.convergent:
            return f"Convergent{{limit={self.limit_estimate:.10g}}}"
        return f"Inconclusive{{{self.reason}}}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["probes"] = [[float(t), float(v)] for t, v in self.probes]
        return d


# ─── Finite integrals ───


def _checked(f: Integrand) -> Callable[[float], float]:
    def g(s: float) -> float:
        v = f(s)
        v = float(v)
        if math.isinf(v):
            raise _Overflow(f"integrand overflowed at s={s:.6g}")
        if math.isnan(v):
            raise QuadratureError(f"non-finite integrand sample at s={s:.6g}")
        return v

    return g


def integrate(f: Integrand, a: float, b: float, tol: float = 1e-9, limit: int = 200) -> tuple[float, float]:
    """
    Adaptive Gauss–Kronrod quadrature of f over [a, b].

    Returns:
        (value, err). Hitting the subdivision limit is logged and the best
        estimate is still returned.
    """
    if b < a:
        raise ValueError(f"integrate needs a <= b, got [{a}, {b}]")
    if a == b:
        return 0.0, 0.0

    result = sp_integrate.quad(_checked(f), a, b, epsabs=tol, epsrel=tol, limit=limit, full_output=1)
    value, err = float(result[0]), float(result[1])
    if len(result) > 3:
        logger.warning(f"quad on [{a:.6g}, {b:.6g}]: {result[3].splitlines()[0]}")
    return value, err


# ─── Improper integrals ───


def _partial_integrals(f: Integrand, t0: float, points: np.ndarray, tol: float):
    """Partial integrals I(T_i) built from consecutive segments. Stops on overflow."""
    T, I = [t0], [0.0]
    total = 0.0
    overflowed = False
    for b in points:
        try:
            value, _ = integrate(f, T[-1], float(b), tol)
        except _Overflow:
            overflowed = True
            break
        total += value
        if not math.isfinite(total) or abs(total) > OVERFLOW_LIMIT:
            overflowed = True
            break
        T.append(float(b))
        I.append(total)
        logger.debug(f"probe T={b:.6g} I={total:.10g}")
    return np.array(T), np.array(I), overflowed


def _extrapolated_limit(I: np.ndarray, settings: ProbeSettings) -> Optional[tuple[float, float]]:
    """Aitken-style tail extrapolation on the last increments."""
    d = np.diff(I)
    if len(d) < 3:
        return None

    scale = settings.tail_tol * (1 + abs(I[-1]))
    if abs(d[-1]) <= scale and abs(d[-2]) <= scale:
        return float(I[-1]), float(abs(d[-1]))

    limits = []
    for j in (len(d) - 2, len(d) - 1):
        if d[j - 1] == 0:
            return None
        rho = d[j] / d[j - 1]
        if not 0 <= rho <= settings.max_ratio:
            return None
        limits.append(I[j + 1] + d[j] * rho / (1 - rho))

    L_prev, L = limits
    if abs(L - L_prev) <= settings.tail_tol * (1 + abs(L)):
        return float(L), float(abs(L - L_prev))
    return None


def _growth_fit(T: np.ndarray, I: np.ndarray, settings: ProbeSettings) -> Optional[dict]:
    """Best of the log / power / exp growth models, or None."""
    d = np.diff(I)
    Ts, Is = T[1:], I[1:]
    fits = []

    log_fit = stats.linregress(np.log(Ts), Is)
    if log_fit.slope > 0:
        fits.append({"model": "log", "exponent": None, "r2": float(log_fit.rvalue**2)})

    log_d = np.log(d)
    power_fit = stats.linregress(np.log(Ts), log_d)
    if power_fit.slope > 0.05:
        fits.append({"model": "power", "exponent": float(power_fit.slope), "r2": float(power_fit.rvalue**2)})

    exp_fit = stats.linregress(Ts, log_d)
    if exp_fit.slope > 0 and power_fit.slope > 0.05:
        fits.append({"model": "exp", "exponent": float(exp_fit.slope), "r2": float(exp_fit.rvalue**2)})

    if not fits:
        return None
    return max(fits, key=lambda fit: fit["r2"])


def _classify_schedule(f: Integrand, t0: float, schedule: str, settings: ProbeSettings) -> DivergenceVerdict:
    points = settings.points(t0, schedule)
    try:
        T, I, overflowed = _partial_integrals(f, t0, points, settings.tol)
    except (QuadratureError, ExprDomainError, ArithmeticError, ValueError) as e:
        return DivergenceVerdict(INCONCLUSIVE, reason=f"integrand error: {e}", schedule=schedule)

    probes = list(zip(T.tolist(), I.tolist()))
    if len(T) < 5:
        if overflowed and len(T) >= 2 and I[-1] > 0:
            return DivergenceVerdict(
                DIVERGENT, growth_model="exp", fit_r2=1.0, schedule=schedule, probes=probes,
                notes=["partial integrals overflowed after few probes"],
            )
        return DivergenceVerdict(INCONCLUSIVE, reason="too few finite probes", schedule=schedule, probes=probes)

    if not overflowed:
        limit = _extrapolated_limit(I, settings)
        if limit is not None:
            return DivergenceVerdict(
                CONVERGENT, limit_estimate=limit[0], err_estimate=limit[1], schedule=schedule, probes=probes
            )

    d = np.diff(I)
    if not np.all(d > 0):
        return DivergenceVerdict(
            INCONCLUSIVE, reason="partial integrals neither settle nor increase", schedule=schedule, probes=probes
        )

    fit = _growth_fit(T, I, settings)
    if fit is None:
        return DivergenceVerdict(INCONCLUSIVE, reason="no growth model applies", schedule=schedule, probes=probes)
    if fit["r2"] < settings.r2_threshold:
        return DivergenceVerdict(
            INCONCLUSIVE,
            reason=f"best growth fit {fit['model']} has r2={fit['r2']:.4f} < {settings.r2_threshold}",
            schedule=schedule,
            probes=probes,
        )

    notes = ["partial integrals overflowed; probing stopped early"] if overflowed else []
    return DivergenceVerdict(
        DIVERGENT,
        growth_model=fit["model"],
        growth_exponent=fit["exponent"],
        fit_r2=fit["r2"],
        schedule=schedule,
        probes=probes,
        notes=notes,
    )


_STRENGTH = {DIVERGENT: 2, CONVERGENT: 2, INCONCLUSIVE: 0}


def classify_improper(f: Integrand, t0: float, settings: Optional[ProbeSettings] = None) -> DivergenceVerdict:
    """
    Classify limsup_{T→∞} ∫_{t0}^T f as Divergent, Convergent or Inconclusive.

    Both probe schedules run; a confident verdict beats Inconclusive, and
    contradictory confident verdicts give Inconclusive.
    """
    settings = settings or ProbeSettings()
    schedules = [s for s in settings.schedules if not (s == "geometric" and t0 <= 0)]

    verdicts = [_classify_schedule(f, t0, s, settings) for s in schedules]
    confident = [v for v in verdicts if v.kind != INCONCLUSIVE]
    kinds = {v.kind for v in confident}

    if len(kinds) > 1:
        result = DivergenceVerdict(
            INCONCLUSIVE,
            reason="probe schedules disagree: " + ", ".join(f"{v.schedule}={v.kind}" for v in verdicts),
            schedule=verdicts[0].schedule,
            probes=verdicts[0].probes,
        )
    elif confident:
        result = max(confident, key=lambda v: v.fit_r2 if v.divergent else -(v.err_estimate or 0.0))
    else:
        result = verdicts[0]
        result.reason = "; ".join(f"{v.schedule}: {v.reason}" for v in verdicts)

    result.notes.extend(_sign_notes(f, t0, settings))
    logger.debug(f"classify_improper from t0={t0:.6g}: {result.describe()}")
    return result


def _sign_notes(f: Integrand, t0: float, settings: ProbeSettings) -> list[str]:
    """Sampled one-signedness of the integrand over the probe range."""
    lo = t0 if t0 > 0 else 1.0
    ts = np.geomspace(lo, settings.t_max(t0), 64)
    try:
        vals = np.array([float(f(t)) for t in ts])
    except Exception as e:
        return [f"sign sampling failed: {e}"]
    tail = vals[len(vals) // 2:]
    if np.all(tail >= 0) or np.all(tail <= 0):
        return ["integrand one-signed on sampled tail"]
    return ["integrand changes sign on sampled tail; limsup read as probe supremum"]


def integrate_tail(f: Integrand, t: float, settings: Optional[ProbeSettings] = None) -> tuple[float, DivergenceVerdict]:
    """
    ∫_t^∞ f. Returns the extrapolated value when the tail converges,
    +inf when it diverges, nan when the classification is inconclusive.
    """
    verdict = classify_improper(f, t, settings)
    if verdict.convergent:
        return verdict.limit_estimate, verdict
    if verdict.divergent:
        return math.inf, verdict
    return math.nan, verdict


# ─── Running integrals ───

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


class CumulativeIntegral:
    """
    C(t) = ∫_base^t f(s) ds on a lazily extended knot grid.

    The grid grows in blocks of doubling length. Each block is refined until
    linear interpolation between knots is within rtol·(1 + |C|) at the
    interval midpoints. f must accept numpy arrays. Extension is guarded by a
    lock, so one instance may be shared between threads.
    """

    def __init__(
        self,
        f: Integrand,
        base: float,
        rtol: float = 1e-8,
        initial_intervals: int = 64,
        max_intervals: int = 2**17,
    ):
        self.f = f
        self.base = float(base)
        self.rtol = rtol
        self.initial_intervals = initial_intervals
        self.max_intervals = max_intervals
        self._knots = [np.array([self.base])]
        self._values = [np.array([0.0])]
        self._end = self.base
        self._block = max(1.0, abs(self.base))
        self._cache: Optional[tuple[np.ndarray, np.ndarray]] = None
        self._lock = threading.Lock()

    def _sample(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            y = np.asarray(self.f(x), dtype=float)
        if y.shape != x.shape:
            y = np.broadcast_to(y, x.shape)
        return y

    def _segment_integrals(self, left: np.ndarray, right: np.ndarray) -> np.ndarray:
        half = 0.5 * (right - left)
        mid = 0.5 * (right + left)
        x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        y = self._sample(x)
        return half * (y @ _GL_WEIGHTS)

    def _build_block(self, a: float, b: float, start: float):
        n = self.initial_intervals
        while True:
            edges = np.linspace(a, b, n + 1)
            mids = 0.5 * (edges[:-1] + edges[1:])
            left = self._segment_integrals(edges[:-1], mids)
            right = self._segment_integrals(mids, edges[1:])
            if not (np.all(np.isfinite(left)) and np.all(np.isfinite(right))):
                raise QuadratureError(f"non-finite integrand on [{a:.6g}, {b:.6g}]")

            whole = left + right
            running = start + np.cumsum(whole)
            interp_err = np.abs(left - 0.5 * whole)
            allowed = self.rtol * (1 + np.abs(running))
            worst = float(np.max(interp_err / allowed))
            if worst <= 1.0 or n >= self.max_intervals:
                if worst > 1.0:
                    logger.warning(
                        f"cumulative grid on [{a:.6g}, {b:.6g}] hit {n} intervals; "
                        f"interpolation error ratio {worst:.3g}"
                    )
                break
            n = min(self.max_intervals, n * max(2, 2 ** math.ceil(0.5 * math.log2(worst))))

        knots = np.empty(2 * n)
        values = np.empty(2 * n)
        knots[0::2] = mids
        knots[1::2] = edges[1:]
        before = np.concatenate(([start], running[:-1]))
        values[0::2] = before + left
        values[1::2] = running
        return knots, values

    def extend_to(self, t: float) -> None:
        with self._lock:
            while self._end < t:
                a, b = self._end, self._end + self._block
                knots, values = self._build_block(a, b, float(self._values[-1][-1]))
                self._knots.append(knots)
                self._values.append(values)
                self._end = b
                self._block *= 2
                self._cache = None

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        with self._lock:
            if self._cache is None:
                self._cache = (np.concatenate(self._knots), np.concatenate(self._values))
            return self._cache

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        if t_arr.size and np.min(t_arr) < self.base - 1e-12 * (1 + abs(self.base)):
            raise ValueError(f"cumulative integral from {self.base} queried below its base")
        if t_arr.size:
            self.extend_to(float(np.max(t_arr)))
        knots, values = self.grid()
        out = np.interp(t_arr, knots, values)
        return float(out) if np.ndim(out) == 0 else out


class ExpWeight:
    """t ↦ exp(−∫_base^t p1(s) ds) backed by a CumulativeIntegral."""

    def __init__(self, p1: Integrand, base: float, rtol: float = 1e-8):
        self.cumulative = CumulativeIntegral(p1, base, rtol=rtol)
        self.base = base

    def __call__(self, t):
        return np.exp(-self.cumulative(t))

    def inverse(self, t):
        """exp(+∫_base^t p1)."""
        return np.exp(self.cumulative(t))


def exp_weight(p1: Integrand, base: float, rtol: float = 1e-8) -> ExpWeight:
    return ExpWeight(p1, base, rtol=rtol)


# ─── Monotone inversion ───


def invert_monotone(m: Union[ExprAst, Integrand], y: float, bracket: tuple[float, float]) -> float:
    """Solve m(s) = y for s in the bracket, m strictly increasing."""
    fn = as_function(m)
    lo, hi = float(bracket[0]), float(bracket[1])
    m_lo, m_hi = float(fn(lo)), float(fn(hi))
    slack = 1e-10 * (1 + abs(y))

    if not (m_lo - slack <= y <= m_hi + slack):
        raise BracketError(f"value {y} outside m([{lo}, {hi}]) = [{m_lo}, {m_hi}]")
    if abs(m_lo - y) <= slack:
        return lo
    if abs(m_hi - y) <= slack:
        return hi

    xtol = 1e-14 * max(1.0, abs(lo), abs(hi))
    root = optimize.bisect(lambda s: float(fn(s)) - y, lo, hi, xtol=xtol, maxiter=400)
    return float(root)
