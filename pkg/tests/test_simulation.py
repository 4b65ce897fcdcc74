"""
Reduced functional ODE and method-of-lines PDE simulation.

Tests verify:
- RK4 sweeps reproduce v = cos t when the argument is not deviated
- Order-of-convergence scaling when halving dt
- Waveform relaxation settles for a small advance
- Example 3.1 reduced problem: contracting sweeps, LGMRES finish, first zero
- The linear wave u = cos(t - 1) sin x on [0, pi]
- w and u formulations agree where both apply
"""
import math

import numpy as np
import pytest

from conftest import make_spec
from numerics.expr import parse_expression
from problem.examples import builtin_example
from problem.model import Box, Dirichlet, Robin
from simulation.pde import MODE_U, MODE_W, pde_residual, simulate_pde
from simulation.reduced import SimulationError, reduced_residual, simulate_reduced
from simulation.reduction import DomainShapeError, reduce_trace
from simulation.signs import detect_sign_changes


# ─── Reduced equation ───


def test_harmonic_reduced_equation():
    traj = simulate_reduced("0", "1", "t", window=(0.0, 2 * math.pi), init=(1.0, 0.0), dt=1e-3)
    assert traj.converged
    assert traj.iterations == 2
    np.testing.assert_allclose(traj.v, np.cos(traj.t), atol=1e-8)
    np.testing.assert_allclose(traj.vprime, -np.sin(traj.t), atol=1e-8)
    first = detect_sign_changes(traj).first
    assert first == pytest.approx(math.pi / 2, abs=1e-3)


def test_rk4_order_convergence():
    """
    Error(dt=0.2) / Error(dt=0.1) ~ 2^4 = 16.
    """
    T = 2.0
    errors = []
    for dt in (0.2, 0.1):
        traj = simulate_reduced("0", "1", "t", window=(0.0, T), init=(1.0, 0.0), dt=dt)
        assert traj.t[-1] == pytest.approx(T)
        errors.append(abs(traj.v[-1] - math.cos(T)))
    ratio = errors[0] / errors[1]
    assert 14.0 < ratio < 18.0, f"Expected ~16x improvement, got {ratio}"


def test_small_advance_relaxation_converges():
    p1, Q, m = "0", "1", "t+0.1"
    traj = simulate_reduced(p1, Q, m, window=(0.0, 3.0), init=(1.0, 0.0), dt=0.01, relax_tol=1e-8)
    assert traj.converged
    assert traj.final_delta <= 1e-8
    residual, scale = reduced_residual(traj, p1, Q, m)
    assert residual < 1e-4 * max(1.0, scale)
    assert traj.metadata()["closure"] == "linear-extrapolation"


def test_reduced_rejects_bad_window():
    with pytest.raises(SimulationError):
        simulate_reduced("0", "1", "t", window=(1.0, 1.0), init=(1.0, 0.0), dt=0.1)
    with pytest.raises(SimulationError):
        simulate_reduced("0", "1", "t", window=(0.0, 1.0), init=(1.0, 0.0), dt=0.0)


def test_reduced_rejects_argument_before_window():
    with pytest.raises(SimulationError):
        simulate_reduced("0", "1", "t-1", window=(0.0, 2.0), init=(1.0, 0.0), dt=0.1)


@pytest.fixture(scope="module")
def ex31_reduced():
    # p1 = 1/t, Q = 5/t, m = 2t on [1, 60]
    return {
        dt: simulate_reduced("1/t", "5/t", "2*t", window=(1.0, 60.0), init=(1.0, 0.0), dt=dt, relax_tol=1e-7)
        for dt in (1e-2, 5e-3)
    }


def test_example_3_1_reduced_converges(ex31_reduced):
    for dt, traj in ex31_reduced.items():
        assert traj.converged, f"dt={dt}: final delta {traj.final_delta}"
        assert traj.final_delta <= 1e-6
        residual, scale = reduced_residual(traj, "1/t", "5/t", "2*t")
        assert residual <= 1e-4 * scale


def test_example_3_1_accepted_iterates_contract(ex31_reduced):
    for traj in ex31_reduced.values():
        deltas = np.asarray(traj.deltas)
        assert len(deltas) >= 1
        assert np.all(np.diff(deltas) < 0)
        if traj.solver == "lgmres":
            residuals = np.asarray(traj.krylov_residuals)
            assert np.all(np.diff(residuals) <= 1e-9 * residuals[:-1] + 1e-15)
        meta = traj.metadata()
        assert meta["deltas"] == list(traj.deltas)
        assert "krylov_residuals" in meta and "rejected_sweeps" in meta


def test_example_3_1_first_crossing(ex31_reduced):
    coarse, fine = (detect_sign_changes(ex31_reduced[dt]) for dt in (1e-2, 5e-3))
    assert coarse.count >= 1 and fine.count >= 1
    assert coarse.first == pytest.approx(4.01514, abs=2e-3)
    assert coarse.first == pytest.approx(fine.first, rel=1e-2)


def test_non_contracting_sweep_is_rejected():
    # v'' = -4 v(t + 1): the second sweep is forced at the resonant frequency 2
    traj = simulate_reduced("0", "4", "t+1", window=(0.0, 8.0), init=(1.0, 0.0), dt=0.01,
                            relax_tol=1e-8, accelerate=False)
    assert traj.rejected
    assert traj.rejected[0] >= traj.deltas[-1]
    assert not traj.converged
    assert traj.solver == "sweeps"


# ─── PDE ───


@pytest.fixture(scope="module")
def linear_trace():
    spec = make_spec()
    trace = simulate_pde(spec, nx=201, dt=1e-3, window=(1.0, 1.0 + math.pi), init=("sin(x)", "0"))
    return spec, trace


def test_linear_wave_half_period(linear_trace):
    _, trace = linear_trace
    assert trace.metadata["mode"] == MODE_W
    assert trace.t[-1] == pytest.approx(1.0 + math.pi)
    assert np.max(np.abs(trace.u[-1] + np.sin(trace.x))) <= 1e-3
    assert not trace.blowup


def test_linear_wave_residual(linear_trace):
    spec, trace = linear_trace
    assert trace.metadata["residual"] < 1e-3
    assert pde_residual(trace, spec) == pytest.approx(trace.metadata["residual"])


def test_linear_wave_reduces_to_cosine(linear_trace):
    # v(t) = int sin(x) u dx = (pi/2) cos(t - 1)
    _, trace = linear_trace
    traj = reduce_trace(trace, 1, Dirichlet())
    np.testing.assert_allclose(traj.v, 0.5 * math.pi * np.cos(trace.t - 1.0), atol=1e-3)
    signs = detect_sign_changes(traj)
    assert signs.count == 1
    assert signs.first == pytest.approx(1.0 + math.pi / 2, abs=1e-3)


def test_zero_data_stays_zero(ex32):
    trace = simulate_pde(ex32, nx=21, dt=1e-3, window=(1.0, 1.05), init=("0", "0"))
    assert trace.metadata["mode"] == MODE_U
    assert trace.metadata["converged"]
    assert np.all(trace.u == 0.0)


def test_dirichlet_boundary_is_pinned(linear_spec):
    trace = simulate_pde(linear_spec, nx=21, dt=1e-3, window=(1.0, 1.1), init=("1", "0"))
    assert np.all(trace.u[:, 0] == 0.0)
    assert np.all(trace.u[:, -1] == 0.0)


def test_overflow_guard_returns_partial_trace():
    spec = make_spec(f_coef="-100")
    trace = simulate_pde(spec, nx=21, dt=1e-3, window=(1.0, 4.0), init=("sin(x)", "0"))
    assert trace.blowup
    assert len(trace.t) < 3001
    assert np.all(np.isfinite(trace.u))
    assert trace.metadata["converged"] is False


def test_robin_example_smoke():
    spec = builtin_example("3.1")
    trace = simulate_pde(spec, nx=11, dt=1e-4, window=(1.0, 1.01))
    assert trace.metadata["mode"] == MODE_U
    assert trace.metadata["robin_penalty"] is not None
    assert trace.metadata["closure"] == "linear-extrapolation"
    assert np.all(np.isfinite(trace.u))
    assert trace.u.shape == (101, 11)


def test_pde_argument_checks(linear_spec):
    with pytest.raises(SimulationError):
        simulate_pde(linear_spec, nx=21, dt=1e-3, window=(0.5, 2.0))
    with pytest.raises(SimulationError):
        simulate_pde(linear_spec, nx=21, dt=0.0, window=(1.0, 2.0))
    with pytest.raises(SimulationError):
        simulate_pde(linear_spec, nx=2, dt=1e-3, window=(1.0, 2.0))
    with pytest.raises(SimulationError):
        simulate_pde(linear_spec, nx=21, dt=1e-3, window=(1.0, 2.0), mode="z")
    with pytest.raises(DomainShapeError):
        simulate_pde(linear_spec.with_changes(domain=Box((0.0, 0.0), (1.0, 1.0))), nx=21, dt=1e-3, window=(1.0, 2.0))


def test_trace_rows_are_long_format(linear_spec):
    trace = simulate_pde(linear_spec, nx=5, dt=0.01, window=(1.0, 1.02), init=("sin(x)", "0"))
    rows = list(trace.rows())
    assert len(rows) == len(trace.t) * len(trace.x)
    assert rows[0][0] == 1.0 and rows[0][1] == 0.0


def test_linear_residual_is_second_order_in_dt():
    spec = make_spec()
    residuals = []
    for nx, dt in ((51, 2e-3), (101, 1e-3)):
        trace = simulate_pde(spec, nx=nx, dt=dt, window=(1.0, 1.5), init=("sin(x)", "0"))
        residuals.append(trace.metadata["residual"])
    ratio = residuals[0] / residuals[1]
    assert 3.5 < ratio < 4.5, f"Expected ~4x improvement, got {ratio}"


def test_w_and_u_modes_agree():
    # p = (alpha - 1) r, so both formulations apply; u stays near 1
    spec = make_spec(alpha=3, p="2", bc=Robin(parse_expression("0")))
    init = ("1+0.1*cos(x)", "0")
    traces = {mode: simulate_pde(spec, nx=41, dt=1e-3, window=(1.0, 2.0), init=init, mode=mode)
              for mode in (MODE_W, MODE_U)}
    assert traces[MODE_W].metadata["mode"] == MODE_W
    assert traces[MODE_U].metadata["mode"] == MODE_U
    u_w, u_u = traces[MODE_W].u, traces[MODE_U].u
    assert np.min(np.abs(u_w)) >= 0.1
    assert np.max(np.abs(u_w - u_u)) <= 1e-3


def test_amplitude_floor_tracks_time_step(ex32):
    # a = r = 1 at t = 1 and eta is advanced, so the floor is dt/dx
    dx = math.pi / 100
    for dt in (1e-3, 5e-4):
        trace = simulate_pde(ex32, nx=101, dt=dt, window=(1.0, 1.0 + 2 * dt))
        assert trace.metadata["amplitude_floor"] == pytest.approx(dt / dx)
    trace = simulate_pde(make_spec(), nx=21, dt=1e-3, window=(1.0, 1.01), init=("sin(x)", "0"))
    assert trace.metadata["amplitude_floor"] is None


def test_diverging_relaxation_keeps_best_sweep():
    # f = -50 u(x, t + 0.5): every sweep amplifies the previous one
    spec = make_spec(f_coef="-50", m="t+0.5")
    trace = simulate_pde(spec, nx=21, dt=1e-2, window=(1.0, 3.0), init=("sin(x)", "0"))
    assert trace.metadata["relaxation"] == "diverged"
    assert trace.metadata["kept_sweep"] == 1
    assert trace.metadata["converged"] is False
    assert not trace.blowup
    assert trace.t[-1] == pytest.approx(3.0)
    assert np.all(np.isfinite(trace.u))


@pytest.mark.slow
def test_example_3_2_first_crossing_is_grid_stable(ex32):
    crossings = []
    for dt in (1e-3, 5e-4):
        trace = simulate_pde(ex32, nx=101, dt=dt, window=(1.0, 6.0))
        assert not trace.blowup
        assert trace.t[-1] == pytest.approx(6.0)
        assert np.all(np.isfinite(trace.u))
        assert trace.metadata["closure"] == "linear-extrapolation"
        signs = detect_sign_changes(reduce_trace(trace, ex32.alpha, ex32.bc))
        assert signs.count >= 1
        crossings.append(signs.first)
    assert crossings[0] == pytest.approx(crossings[1], rel=1e-2)
