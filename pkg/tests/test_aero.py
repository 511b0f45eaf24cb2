import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bodyflight.aero import (
    NO_FLOW_SPEED,
    AeroConfig,
    damping_moment,
    flow_angles,
    plate_forces,
    segment_wrench,
    total_wrench,
)
from bodyflight.body import BodyConfig, body_geometry, mirror_pose

from conftest import symmetric_offset

FLIP = np.array([1.0, -1.0, 1.0])


def test_flow_angles_normal_incidence():
    a = flow_angles([0.0, 0.0, 5.0])
    assert a.alpha == pytest.approx(np.pi / 2)
    assert a.beta == 0.0


def test_flow_angles_along_long_axis():
    assert flow_angles([5.0, 0.0, 0.0]).alpha == 0.0


def test_flow_angles_sideslip():
    assert flow_angles([1.0, 1.0, 0.0]).beta == pytest.approx(np.pi / 4, abs=1e-9)


def test_no_flow_below_threshold():
    assert flow_angles([0.0, 0.0, 0.5 * NO_FLOW_SPEED]) is None


def _plate(v, aero):
    eye = np.eye(3)
    return plate_forces(eye[None, 2], eye[None, 0], eye[None, 1], np.array([[1.0, 0.0, 0.0]]),
                        np.array([1.0]), np.asarray(v, float)[None, :], aero)


def test_flat_plate_drag_hand_value():
    aero = AeroConfig(c_lift_max=0.0, c_drag_max=1.0, c_moment_max=0.0, air_density=1.0)
    force, _ = _plate([0, 0, 10.0], aero)
    assert np.linalg.norm(force[0]) == pytest.approx(50.0, rel=1e-12)
    assert force[0][2] < 0  # opposes the motion


def test_force_scales_with_speed_squared():
    aero = AeroConfig()
    v = np.array([3.0, 1.0, 7.0])
    f1, _ = _plate(v, aero)
    f2, _ = _plate(2 * v, aero)
    assert np.linalg.norm(f2) / np.linalg.norm(f1) == pytest.approx(4.0, abs=1e-9)


def test_lift_is_perpendicular_to_flow():
    aero = AeroConfig(c_drag_max=0.0, c_lift_max=1.0)
    v = np.array([4.0, 0.0, 3.0])
    force, _ = _plate(v, aero)
    assert abs(force[0] @ v) < 1e-12
    assert np.linalg.norm(force[0]) > 0


def test_zero_velocity_zero_wrench(config):
    seg = config.segments[0]
    w = segment_wrench(seg, np.eye(3), np.zeros(3), np.zeros(3), config.aero)
    np.testing.assert_array_equal(w.force, 0.0)
    np.testing.assert_array_equal(w.moment, 0.0)


def test_symmetric_pose_vertical_flow(config, neutral):
    w = total_wrench(config, neutral, [0, 0, 60.0], np.zeros(3))
    assert abs(w.force[1]) < 1e-6
    assert abs(w.moment[2]) < 1e-6
    assert abs(w.moment[0]) < 1e-6


def test_yaw_damping_sign(config, neutral):
    w0 = total_wrench(config, neutral, [0, 0, 60.0], np.zeros(3))
    w = total_wrench(config, neutral, [0, 0, 60.0], [0, 0, 0.5])
    assert w.moment[2] - w0.moment[2] < 0
    assert w.moment[2] < 0


def test_single_segment_total_equals_segment():
    data = {
        "segments": [{"name": "plate", "shape": "box", "dims_m": [0.5, 0.4, 0.05], "mass_fraction": 1.0}],
        "joints": [],
        "total_mass_kg": 10.0,
        "height_m": 1.0,
        "aero": {"c_damp_roll": 0.0, "c_damp_pitch": 0.0, "c_damp_yaw": 0.0},
    }
    cfg = BodyConfig.from_dict(data, strict=False)
    v = np.array([2.0, -1.0, 20.0])
    total = total_wrench(cfg, np.zeros(0), v, np.zeros(3))
    single = segment_wrench(cfg.segments[0], np.eye(3), np.zeros(3), v, cfg.aero)
    np.testing.assert_allclose(total.force, single.force, atol=1e-12)
    np.testing.assert_allclose(total.moment, single.moment, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_mirror_equivariance(seed):
    from bodyflight.body import default_body_config, standard_neutral_pose

    config = default_body_config()
    rng = np.random.default_rng(seed)
    pose = standard_neutral_pose() + rng.uniform(-0.3, 0.3, 45)
    v = rng.uniform(-10, 10, 3) + np.array([0, 0, 50.0])
    w = rng.uniform(-1, 1, 3)
    a = total_wrench(config, pose, v, w)
    b = total_wrench(config, mirror_pose(pose), v * FLIP, -w * FLIP)
    np.testing.assert_allclose(b.force, a.force * FLIP, atol=1e-9)
    np.testing.assert_allclose(b.moment, -a.moment * FLIP, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(0, 80))
def test_damping_is_dissipative(omega, speed):
    from bodyflight.body import default_body_config, standard_neutral_pose

    config = default_body_config()
    geo = body_geometry(config, standard_neutral_pose())
    m = damping_moment(geo, config.aero, speed, omega)
    assert np.dot(omega, m) <= 0.0


def test_wrench_continuous_in_pose(config, neutral):
    v = [0, 0, 60.0]
    base = total_wrench(config, neutral, v, np.zeros(3))
    near = total_wrench(config, neutral + 1e-7 * symmetric_offset(), v, np.zeros(3))
    assert np.linalg.norm(near.force - base.force) < 1e-3


def test_invalid_coefficients():
    with pytest.raises(ValueError):
        AeroConfig(c_drag_max=-1.0)
    with pytest.raises(ValueError):
        AeroConfig(air_density=0.0)


def test_altitude_density():
    aero = AeroConfig(altitude_density=True)
    assert aero.density(4000.0) == pytest.approx(aero.air_density)
    assert aero.density(0.0) > aero.density(4000.0)
    assert AeroConfig().density(0.0) == AeroConfig().air_density
