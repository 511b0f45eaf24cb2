import copy
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bodyflight.body import (
    JOINT_NAMES,
    N_DOF,
    XSENS_SEGMENTS,
    BodyConfig,
    ConfigError,
    QuatSample,
    body_geometry,
    forward_kinematics,
    is_symmetric_pose,
    load_body_config,
    mass_properties,
    mirror_pose,
    pose_to_quat,
    quat_to_pose,
    save_body_config,
    validate_pose,
)
from bodyflight.rotations import (
    axis_angle_quat,
    euler_zyx_to_matrix,
    matrix_to_euler_zyx,
    matrix_to_quat,
    quat_conj,
    quat_mul,
    quat_to_matrix,
)

from conftest import asymmetric_pose

angles = st.floats(-np.pi, np.pi, allow_nan=False)


def test_default_config_shape(config):
    assert len(config.segments) == 16
    assert len(config.joints) == 15
    assert config.total_mass == 80.0
    assert config.height == 1.80
    assert abs(sum(s.mass_fraction for s in config.segments) - 1.0) < 1e-9


def test_config_round_trip(tmp_path, config):
    path = tmp_path / "body.json"
    save_body_config(config, path)
    again = load_body_config(path)
    assert again.to_dict() == config.to_dict()


def test_fifteen_segments_rejected(config):
    data = config.to_dict()
    data["segments"] = data["segments"][:-1]
    with pytest.raises(ConfigError, match="expected 16 segments"):
        BodyConfig.from_dict(data)


def test_asymmetric_forearms_rejected(config):
    data = copy.deepcopy(config.to_dict())
    for s in data["segments"]:
        if s["name"] == "forearm_l":
            s["dims_m"][0] = 0.30
        if s["name"] == "forearm_r":
            s["dims_m"][0] = 0.25
    with pytest.raises(ConfigError, match="symmetry"):
        BodyConfig.from_dict(data)


def test_mass_fractions_must_sum_to_one(config):
    data = copy.deepcopy(config.to_dict())
    data["segments"][0]["mass_fraction"] += 0.01
    with pytest.raises(ConfigError, match="sum"):
        BodyConfig.from_dict(data)


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_body_config(path)


def test_validate_pose():
    validate_pose(np.zeros(N_DOF))
    with pytest.raises(ValueError):
        validate_pose(np.zeros(44))
    with pytest.raises(ValueError):
        validate_pose(np.full(N_DOF, 4.0))
    with pytest.raises(ValueError):
        validate_pose(np.full(N_DOF, np.nan))


@settings(max_examples=50, deadline=None)
@given(st.tuples(angles, st.floats(-1.35, 1.35), angles))
def test_euler_round_trip(a):
    m = euler_zyx_to_matrix(np.array(a))
    back, gimbal = matrix_to_euler_zyx(m)
    assert not gimbal
    np.testing.assert_allclose(euler_zyx_to_matrix(back), m, atol=1e-12)
    np.testing.assert_allclose(back, a, atol=1e-9)


def test_euler_order_is_z_then_y_then_x():
    psi, theta, phi = 0.3, -0.2, 0.5
    rz = quat_to_matrix(axis_angle_quat([0, 0, 1], psi))
    ry = quat_to_matrix(axis_angle_quat([0, 1, 0], theta))
    rx = quat_to_matrix(axis_angle_quat([1, 0, 0], phi))
    np.testing.assert_allclose(euler_zyx_to_matrix(np.array([psi, theta, phi])), rz @ ry @ rx, atol=1e-14)


def test_gimbal_lock_folds_into_psi():
    m = euler_zyx_to_matrix(np.array([0.4, np.pi / 2, 0.3]))
    angles_, gimbal = matrix_to_euler_zyx(m)
    assert gimbal
    assert angles_[2] == 0.0
    np.testing.assert_allclose(euler_zyx_to_matrix(angles_), m, atol=1e-9)


def _identity_sample():
    return QuatSample(0.0, np.tile([1.0, 0, 0, 0], (len(XSENS_SEGMENTS), 1)))


def test_identity_quaternions_give_zero_pose():
    np.testing.assert_array_equal(quat_to_pose(_identity_sample()), np.zeros(N_DOF))


def test_single_axis_rotation():
    q = np.tile([1.0, 0, 0, 0], (len(XSENS_SEGMENTS), 1))
    q[XSENS_SEGMENTS.index("upper_leg_l")] = axis_angle_quat([0, 0, 1], np.deg2rad(30))
    # the knee compensates so only the hip moves
    q[XSENS_SEGMENTS.index("lower_leg_l")] = q[XSENS_SEGMENTS.index("upper_leg_l")]
    q[XSENS_SEGMENTS.index("foot_l")] = q[XSENS_SEGMENTS.index("upper_leg_l")]
    q[XSENS_SEGMENTS.index("toe_l")] = q[XSENS_SEGMENTS.index("upper_leg_l")]
    pose = quat_to_pose(QuatSample(0.0, q))
    hip = JOINT_NAMES.index("hip_l")
    np.testing.assert_allclose(pose[3 * hip:3 * hip + 3], [0.5236, 0, 0], atol=1e-4)
    others = np.delete(pose, np.arange(3 * hip, 3 * hip + 3))
    np.testing.assert_allclose(others, 0.0, atol=1e-12)


def test_non_unit_quaternion_rejected():
    q = np.tile([1.0, 0, 0, 0], (len(XSENS_SEGMENTS), 1))
    q[3] = [2.0, 0, 0, 0]
    with pytest.raises(ValueError, match="non-unit"):
        QuatSample(0.0, q)


@pytest.mark.filterwarnings("ignore:gimbal proximity")
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_quat_pose_round_trip(seed):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((len(XSENS_SEGMENTS), 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    # a sample where merged sources already agree with their representative
    pose = quat_to_pose(QuatSample(0.0, q))
    rebuilt = pose_to_quat(pose, root=q[0])
    again = quat_to_pose(rebuilt)
    np.testing.assert_allclose(again, pose, atol=1e-9)
    # relative orientations of the representatives are reproduced
    r = quat_to_matrix(rebuilt.orientations)
    src = quat_to_matrix(q)
    for a, b in (("pelvis", "l5"), ("l5", "t12"), ("t12", "upper_arm_l"), ("upper_leg_r", "lower_leg_r")):
        ia, ib = XSENS_SEGMENTS.index(a), XSENS_SEGMENTS.index(b)
        np.testing.assert_allclose(r[ia].T @ r[ib], src[ia].T @ src[ib], atol=1e-9)


def test_symmetric_neutral_statics(config, neutral):
    mp = mass_properties(config, neutral, np.zeros(N_DOF))
    assert abs(mp.cog[1]) < 1e-9
    np.testing.assert_array_equal(mp.inertia_rate, np.zeros((3, 3)))
    assert is_symmetric_pose(neutral)


def test_zero_pose_vs_neutral(config, neutral):
    a = mass_properties(config, np.zeros(N_DOF))
    b = mass_properties(config, neutral)
    assert a.cog[2] != pytest.approx(b.cog[2], abs=1e-6)
    for mp in (a, b):
        np.testing.assert_allclose(mp.inertia, mp.inertia.T, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(mp.inertia) > 0)


def test_two_point_masses_inertia():
    tiny = [1e-6, 1e-6, 1e-6]
    data = {
        "segments": [
            {"name": "a", "shape": "ellipsoid", "dims_m": tiny, "mass_fraction": 0.5},
            {"name": "b", "shape": "ellipsoid", "dims_m": tiny, "mass_fraction": 0.5},
        ],
        "joints": [{"name": "j", "parent": "a", "child": "b",
                    "offset_parent_m": [0.5, 0, 0], "offset_child_m": [0.5, 0, 0]}],
        "total_mass_kg": 80.0,
        "height_m": 1.0,
    }
    toy = BodyConfig.from_dict(data, strict=False)
    mp = mass_properties(toy, np.zeros(3))
    # masses sit at x = 0 and x = 1, i.e. +-0.5 m about the cog
    assert mp.inertia[1, 1] == pytest.approx(20.0, abs=1e-9)
    assert mp.inertia[2, 2] == pytest.approx(20.0, abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_inertia_invariants(seed):
    from bodyflight.body import default_body_config

    config = default_body_config()
    rng = np.random.default_rng(seed)
    pose = rng.uniform(-1.0, 1.0, N_DOF)
    mp = mass_properties(config, pose)
    ev = np.linalg.eigvalsh(mp.inertia)
    assert np.all(ev > 0)
    i1, i2, i3 = ev
    assert i1 + i2 >= i3 - 1e-12
    # mirror flips the lateral cog and the xy, yz cross terms
    mm = mass_properties(config, mirror_pose(pose))
    assert mm.cog[1] == pytest.approx(-mp.cog[1], abs=1e-12)
    assert mm.inertia[0, 1] == pytest.approx(-mp.inertia[0, 1], abs=1e-12)
    assert mm.inertia[1, 2] == pytest.approx(-mp.inertia[1, 2], abs=1e-12)
    assert mm.inertia[0, 2] == pytest.approx(mp.inertia[0, 2], abs=1e-12)


def test_composite_dominates_segments(config, neutral):
    geo = body_geometry(config, neutral)
    sk = config.skeleton
    assert geo.total_mass == pytest.approx(config.total_mass)
    for i in range(sk.n_segments):
        seg = geo.rotation[i] @ sk.local_inertia[i] @ geo.rotation[i].T
        r = geo.r_cog[i]
        about_cog = seg + sk.mass[i] * (r @ r * np.eye(3) - np.outer(r, r))
        assert np.all(np.linalg.eigvalsh(geo.inertia - about_cog) > -1e-9)


def test_forward_kinematics_lipschitz(config, neutral):
    _, pos = forward_kinematics(config, neutral)
    eps = 1e-6
    bound = config.skeleton.chain_length * eps
    for k in range(N_DOF):
        p = neutral.copy()
        p[k] += eps
        _, moved = forward_kinematics(config, p)
        assert np.max(np.linalg.norm(moved - pos, axis=1)) <= bound


def test_pose_rate_gives_inertia_rate(config, neutral):
    rate = np.zeros(N_DOF)
    rate[3 * JOINT_NAMES.index("shoulder_l") + 2] = 1.0
    mp = mass_properties(config, neutral, rate)
    assert np.any(np.abs(mp.inertia_rate) > 1e-6)
    assert np.any(np.abs(mp.cog_rate) > 1e-6)


def test_mirror_is_involution():
    rng = np.random.default_rng(3)
    p = rng.uniform(-1, 1, N_DOF)
    np.testing.assert_array_equal(mirror_pose(mirror_pose(p)), p)


def test_asymmetric_pose_moves_cog_laterally(config, neutral):
    mp = mass_properties(config, asymmetric_pose(neutral))
    assert abs(mp.cog[1]) > 1e-4


def test_quaternion_helpers():
    q = axis_angle_quat([1, 2, 3], 0.7)
    np.testing.assert_allclose(quat_mul(q, quat_conj(q)), [1, 0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(matrix_to_quat(quat_to_matrix(q)), q, atol=1e-12)


def test_bundled_config_is_json(config):
    json.dumps(config.to_dict())
