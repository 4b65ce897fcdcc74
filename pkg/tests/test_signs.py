import numpy as np
import pytest

from simulation.reduced import Trajectory
from simulation.signs import detect_sign_changes


def test_cosine_crossings():
    t = np.linspace(0.0, 10.0, 2001)
    report = detect_sign_changes((t, np.cos(t)))
    assert report.count == 3
    np.testing.assert_allclose(report.crossings, [np.pi / 2, 3 * np.pi / 2, 5 * np.pi / 2], atol=1e-4)
    assert report.first == pytest.approx(np.pi / 2, abs=1e-4)


def test_two_point_series_crosses_at_midpoint():
    report = detect_sign_changes((np.array([0.0, 2.0]), np.array([1.0, -1.0])))
    assert report.crossings == [1.0]


def test_constant_series_has_no_crossings():
    report = detect_sign_changes((np.linspace(0.0, 1.0, 5), np.full(5, 3.0)))
    assert report.count == 0
    assert report.first is None
    assert report.to_dict() == {"count": 0, "first_crossing": None, "crossings": []}


def test_zero_samples_are_skipped():
    t = np.array([0.0, 1.0, 2.0, 3.0])
    v = np.array([1.0, 0.0, 0.0, -1.0])
    report = detect_sign_changes((t, v))
    assert report.crossings == [1.5]


def test_touching_zero_is_not_a_crossing():
    t = np.array([0.0, 1.0, 2.0])
    report = detect_sign_changes((t, np.array([1.0, 0.0, 1.0])))
    assert report.count == 0


def test_positive_scaling_invariance():
    t = np.linspace(0.0, 10.0, 501)
    v = np.sin(t) * np.exp(-0.1 * t)
    base = detect_sign_changes((t, v)).crossings
    scaled = detect_sign_changes((t, 7.5 * v)).crossings
    np.testing.assert_allclose(scaled, base)


def test_accepts_trajectory():
    t = np.linspace(0.0, 4.0, 401)
    traj = Trajectory(t=t, v=np.cos(t), vprime=-np.sin(t))
    assert detect_sign_changes(traj).count == 1


def test_rejects_bad_series():
    with pytest.raises(ValueError):
        detect_sign_changes((np.array([0.0]), np.array([1.0])))
    with pytest.raises(ValueError):
        detect_sign_changes((np.array([0.0, 1.0]), np.array([1.0])))


def test_noise_floor_is_relative_to_amplitude():
    t = np.linspace(0.0, 4.0, 5)
    v = np.array([1e6, 2e-6, -3e-6, 1e-6, -1e6])
    assert detect_sign_changes((t, v)).crossings == [2.0]
    assert detect_sign_changes((t, v), rtol=0.0).count == 3
    assert detect_sign_changes((t, 1e-6 * v)).crossings == [2.0]
