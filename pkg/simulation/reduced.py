"""
Reduced functional ODE

    v″(t) + p1(t)·v′(t) + Q(t)·v(m(t)) = 0,   m(t) ≥ t,

integrated by waveform relaxation: each sweep is a fixed-step RK4 pass in
which the deviating value comes from the previous iterate. The local part
Q(t)·v(t) is kept inside the sweep and only Q(t)·(v(m(t)) − v(t)) is read
from the previous iterate, which leaves the fixed point unchanged. The sweep
map is affine in the previous iterate, so once plain sweeps stop contracting
the fixed-point equation S(v) − v = 0 is a linear system, finished with
scipy's LGMRES.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import LinearOperator, lgmres

from numerics.expr import ExprAst, as_function

logger = logging.getLogger(__name__)

CLOSURE = "linear-extrapolation"


class SimulationError(RuntimeError):
    """Raised when a simulation cannot be set up or blows up."""


@dataclass
class Trajectory:
    """Uniform-grid trajectory v(t), v′(t) with relaxation metadata."""

    t: np.ndarray
    v: np.ndarray
    vprime: np.ndarray
    iterations: int = 0
    final_delta: float = 0.0
    converged: bool = True
    scheme: str = "rk4"
    closure: str = CLOSURE
    deltas: list[float] = field(default_factory=list)
    solver: str = "sweeps"
    krylov_residuals: list[float] = field(default_factory=list)
    rejected: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.vprime = np.asarray(self.vprime, dtype=float)
        if not (len(self.t) == len(self.v) == len(self.vprime)):
            raise ValueError("t, v and vprime must have the same length")
        if len(self.t) < 2 or np.any(np.diff(self.t) <= 0):
            raise ValueError("time grid must be strictly increasing with at least two nodes")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def metadata(self) -> dict:
        return {
            "dt": self.dt,
            "window": [float(self.t[0]), float(self.t[-1])],
            "iterations": self.iterations,
            "final_delta": self.final_delta,
            "converged": self.converged,
            "scheme": self.scheme,
            "closure": self.closure,
            "solver": self.solver,
            "deltas": list(self.deltas),
            "krylov_residuals": list(self.krylov_residuals),
            "rejected_sweeps": list(self.rejected),
        }

    def rows(self):
        """CSV rows (t, v, vprime)."""
        return zip(self.t.tolist(), self.v.tolist(), self.vprime.tolist())


class History:
    """
    Closure of a gridded iterate: cubic spline inside the window, linear
    extrapolation from the last two nodes beyond it, first value before it.
    """

    def __init__(self, t: np.ndarray, v: np.ndarray):
        v = np.asarray(v, dtype=float)
        self.t0, self.t1 = float(t[0]), float(t[-1])
        self.v0, self.v1 = v[0], v[-1]
        self.slope = (v[-1] - v[-2]) / (t[-1] - t[-2])
        self.trailing = v.ndim - 1
        self.spline = CubicSpline(t, v, axis=0)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        out = np.asarray(self.spline(np.clip(s, self.t0, self.t1)), dtype=float)
        sb = s.reshape(s.shape + (1,) * self.trailing)
        out = np.where(sb > self.t1, self.v1 + self.slope * (sb - self.t1), out)
        return np.where(sb < self.t0, self.v0, out)


def _sample(fn: Callable, ts: np.ndarray) -> np.ndarray:
    values = np.asarray(fn(ts), dtype=float)
    return np.broadcast_to(values, ts.shape).astype(float)


def _affine_propagator(A0, Ah, A1, dt):
    """Per-step matrices M_n with y_{n+1} = M_n y_n + c_n for the linear RK4 part."""
    n = A0.shape[0]
    eye = np.broadcast_to(np.eye(2), (n, 2, 2))
    K1 = A0
    K2 = Ah @ (eye + 0.5 * dt * K1)
    K3 = Ah @ (eye + 0.5 * dt * K2)
    K4 = A1 @ (eye + dt * K3)
    return eye + dt / 6.0 * (K1 + 2 * K2 + 2 * K3 + K4)


def _affine_offset(Ah, A1, g0, gh, g1, dt):
    """Offsets c_n of the RK4 step from the forcing at the three stage times."""
    c1 = g0
    c2 = np.einsum("nij,nj->ni", Ah, 0.5 * dt * c1) + gh
    c3 = np.einsum("nij,nj->ni", Ah, 0.5 * dt * c2) + gh
    c4 = np.einsum("nij,nj->ni", A1, dt * c3) + g1
    return dt / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4)


def _system(p1: np.ndarray, Q: np.ndarray) -> np.ndarray:
    A = np.zeros((len(p1), 2, 2))
    A[:, 0, 1] = 1.0
    A[:, 1, 0] = -Q
    A[:, 1, 1] = -p1
    return A


class _ReducedSweep:
    """One RK4 pass of the reduced equation against a fixed previous iterate."""

    def __init__(self, p1: Callable, Q: Callable, m: Callable, t: np.ndarray, init: tuple[float, float]):
        self.t = t
        self.dt = float(t[1] - t[0])
        self.init = (float(init[0]), float(init[1]))
        stages = (t[:-1], t[:-1] + 0.5 * self.dt, t[1:])
        self.stage_t = stages
        self.stage_Q = [_sample(Q, s) for s in stages]
        self.stage_m = [_sample(m, s) for s in stages]
        A0, Ah, A1 = (_system(_sample(p1, s), q) for s, q in zip(stages, self.stage_Q))
        self.A = (A0, Ah, A1)
        M = _affine_propagator(A0, Ah, A1, self.dt)
        self.M = [M[:, i, j].tolist() for i in range(2) for j in range(2)]

    def __call__(self, previous: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        history = History(self.t, previous)
        g = []
        for ts, Qs, ms in zip(self.stage_t, self.stage_Q, self.stage_m):
            forcing = np.zeros((len(ts), 2))
            forcing[:, 1] = -Qs * (history(ms) - history(ts))
            g.append(forcing)
        _, Ah, A1 = self.A
        c = _affine_offset(Ah, A1, g[0], g[1], g[2], self.dt)
        c0, c1 = c[:, 0].tolist(), c[:, 1].tolist()
        m00, m01, m10, m11 = self.M

        n = len(self.t)
        v = [0.0] * n
        w = [0.0] * n
        v[0], w[0] = self.init
        for k in range(n - 1):
            a, b = v[k], w[k]
            v[k + 1] = m00[k] * a + m01[k] * b + c0[k]
            w[k + 1] = m10[k] * a + m11[k] * b + c1[k]
        return np.array(v), np.array(w)


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def _krylov_fixed_point(sweep: "_ReducedSweep", start: np.ndarray, tol: float, max_cycles: int):
    """
    Solve the affine fixed-point equation S(v) = v with LGMRES.

    S(v) = L v + S(0) with L linear, so S(v) − v = 0 is (I − L) v = S(0).
    The RMS residual of every restart cycle is recorded; LGMRES minimises the
    residual over a space containing the previous iterate, so the history
    never increases.

    Returns:
        (fixed point, residual history, lgmres info flag)
    """
    n = len(start)
    offset = sweep(np.zeros(n))[0]

    def matvec(x):
        x = np.ravel(x)
        return x - (sweep(x)[0] - offset)

    operator = LinearOperator((n, n), matvec=matvec, dtype=float)
    residuals = [_rms(sweep(start)[0] - start)]

    def record(xk):
        residuals.append(_rms(sweep(np.ravel(xk))[0] - np.ravel(xk)))

    fixed, info = lgmres(operator, offset, x0=start, rtol=0.0, atol=0.5 * tol,
                         maxiter=max_cycles, callback=record)
    return np.ravel(fixed), residuals, info


def simulate_reduced(
    p1: Union[Callable, ExprAst],
    Q: Union[Callable, ExprAst],
    m: Union[Callable, ExprAst],
    window: tuple[float, float],
    init: tuple[float, float],
    dt: float,
    relax_tol: float = 1e-8,
    max_iter: int = 50,
    accelerate: bool = True,
) -> Trajectory:
    """
    Waveform relaxation for v″ + p1 v′ + Q v(m(t)) = 0 on the window.

    A sweep is accepted only while its sup-norm delta is below the previous
    one, so the recorded deltas decrease strictly. The first sweep that does
    not contract (or a slow one, when accelerate is set) hands the last
    accepted iterate to LGMRES; a final sweep of the Krylov solution gives
    the reported delta.

    Returns:
        Trajectory; converged=False when the final delta is above relax_tol.
    """
    T0, T1 = float(window[0]), float(window[1])
    if not dt > 0 or not T1 > T0:
        raise SimulationError(f"need dt > 0 and T1 > T0, got dt={dt}, window=[{T0}, {T1}]")
    n_steps = max(1, int(round((T1 - T0) / dt)))
    t = np.linspace(T0, T1, n_steps + 1)

    p1_fn, Q_fn, m_fn = as_function(p1), as_function(Q), as_function(m)
    m_samples = _sample(m_fn, t)
    if np.any(m_samples < T0 - 1e-12 * (1 + abs(T0))):
        raise SimulationError(f"m(t) must stay >= T0={T0} on the window")

    sweep = _ReducedSweep(p1_fn, Q_fn, m_fn, t, init)
    previous = np.full(len(t), float(init[0]))
    current, current_prime = previous, np.full(len(t), float(init[1]))
    deltas: list[float] = []
    rejected: list[float] = []
    krylov: list[float] = []
    solver = "sweeps"
    converged = False

    for k in range(max_iter):
        candidate, candidate_prime = sweep(previous)
        delta = float(np.max(np.abs(candidate - previous)))
        logger.debug(f"relaxation sweep {k + 1}: delta={delta:.3e}")
        if not np.isfinite(delta) or (deltas and delta >= deltas[-1]):
            rejected.append(delta)
            logger.info(f"sweep {k + 1} does not contract (delta={delta:.3e}); keeping sweep {len(deltas)}")
            break
        deltas.append(delta)
        previous = current = candidate
        current_prime = candidate_prime
        if delta <= relax_tol:
            converged = True
            break
        if accelerate and len(deltas) >= 2 and delta > 0.5 * deltas[-2]:
            break

    if not converged and accelerate:
        solver = "lgmres"
        logger.info(f"finishing the fixed-point equation with LGMRES after {len(deltas)} accepted sweeps")
        try:
            fixed, krylov, info = _krylov_fixed_point(sweep, previous, relax_tol, max_iter)
            if info > 0:
                logger.warning(f"LGMRES stopped after {info} cycles above {relax_tol:.1e}")
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
            fixed = previous
            logger.error(f"LGMRES failed: {e}")
        if np.all(np.isfinite(fixed)):
            current, current_prime = sweep(fixed)
            final = float(np.max(np.abs(current - fixed)))
        else:
            final = math.inf
        converged = final <= relax_tol
    else:
        final = deltas[-1] if deltas else math.inf

    if not converged:
        logger.warning(f"waveform relaxation not converged: last delta {final:.3e}")

    return Trajectory(
        t=t,
        v=current,
        vprime=current_prime,
        iterations=len(deltas) + max(0, len(krylov) - 1),
        final_delta=final,
        converged=converged,
        deltas=deltas,
        solver=solver,
        krylov_residuals=krylov,
        rejected=rejected,
    )


def reduced_residual(traj: Trajectory, p1, Q, m) -> tuple[float, float]:
    """
    L∞ residual of v″ + p1 v′ + Q v(m(t)) on the interior nodes.

    Returns:
        (residual, max |v″|)
    """
    p1_fn, Q_fn, m_fn = as_function(p1), as_function(Q), as_function(m)
    t = traj.t[1:-1]
    vpp = CubicSpline(traj.t, traj.vprime).derivative()(t)
    history = History(traj.t, traj.v)
    res = vpp + _sample(p1_fn, t) * traj.vprime[1:-1] + _sample(Q_fn, t) * history(_sample(m_fn, t))
    return float(np.max(np.abs(res))), float(np.max(np.abs(vpp)))
