import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bodyflight.body import N_DOF
from bodyflight.freefall import PoseClampWarning
from bodyflight.motion import MotionDataset
from bodyflight.pca import (
    DecompositionError,
    EmptyMaskWarning,
    MaskedPattern,
    PrincipalDecomposition,
    Reconstruction,
    build_data_matrix,
    compose_pose,
    decompose,
    decompose_dataset,
    detect_synergies,
    load_decomposition,
    mask_component,
    save_decomposition,
    top_dofs,
)


def _check_identities(dec, data):
    pc = dec.components
    assert np.max(np.abs(pc.T @ pc - np.eye(N_DOF))) < 1e-9
    assert np.all(np.diff(dec.eigenvalues) <= 1e-12)
    assert np.max(np.abs(dec.reconstruct() - data)) < 1e-9


def test_constant_dataset(neutral):
    ds = MotionDataset.constant(neutral, 1.0)
    matrix, mean = build_data_matrix(ds)
    np.testing.assert_allclose(matrix.values, 0.0, atol=1e-15)
    np.testing.assert_allclose(mean, neutral, atol=1e-15)
    dec = decompose_dataset(ds)
    assert np.max(dec.eigenvalues) < 1e-9
    assert dec.dominant() == []


def test_matrix_shape_for_two_minutes(neutral):
    ds = MotionDataset.constant(neutral, 120.0, 240.0)
    matrix, _ = build_data_matrix(ds)
    assert matrix.values.shape == (45, 28800)


def test_two_sample_symmetric_mean():
    rng = np.random.default_rng(0)
    p = rng.uniform(-1, 1, N_DOF)
    matrix, mean = build_data_matrix(MotionDataset.from_poses([p, -p]))
    np.testing.assert_allclose(mean, 0.0, atol=1e-15)
    np.testing.assert_allclose(matrix.values[:, 0], p, atol=1e-15)
    np.testing.assert_allclose(matrix.values[:, 1], -p, atol=1e-15)


def test_rank_one_data():
    rng = np.random.default_rng(1)
    u = rng.standard_normal(N_DOF)
    u /= np.linalg.norm(u)
    t = np.arange(1000) / 240.0
    data = np.outer(u, 0.3 * np.sin(2 * np.pi * t))
    dec = decompose(data)
    assert dec.dominant() == [1]
    assert abs(dec.component(1) @ u) > 1 - 1e-9


def test_gaussian_round_trip():
    rng = np.random.default_rng(2)
    data = rng.standard_normal((N_DOF, 1000))
    dec = decompose(data)
    _check_identities(dec, data.T)


def test_variance_ratio():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.standard_normal((N_DOF, 2)))
    n = 2400
    t = np.arange(n)
    a = 2.0 * np.sqrt(2) * np.sin(2 * np.pi * 5 * t / n)
    b = 1.0 * np.sqrt(2) * np.sin(2 * np.pi * 11 * t / n)
    dec = decompose(np.outer(q[:, 0], a) + np.outer(q[:, 1], b))
    np.testing.assert_allclose(dec.normalized_eigenvalues[:2], [1.0, 0.5], atol=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 3000), st.integers(0, 2**31 - 1))
def test_identities_on_random_data(n, seed):
    rng = np.random.default_rng(seed)
    poses = rng.uniform(-1, 1, (n, N_DOF))
    dec = decompose_dataset(MotionDataset.from_poses(poses))
    _check_identities(dec, poses)
    # variance of the control signals is non-increasing
    var = np.var(dec.control_signals, axis=1)
    assert np.all(np.diff(var) <= 1e-9 * max(1.0, var[0]))


def test_fewer_samples_than_dofs_gives_full_basis(motion_dataset):
    ds = MotionDataset.from_poses(motion_dataset.poses[:10])
    dec = decompose_dataset(ds)
    assert dec.components.shape == (N_DOF, N_DOF)
    _check_identities(dec, ds.poses)


def test_sign_convention(motion_dataset):
    dec = decompose_dataset(motion_dataset)
    for i in range(N_DOF):
        c = dec.components[:, i]
        assert c[np.argmax(np.abs(c))] > 0


def test_non_finite_rejected():
    data = np.zeros((N_DOF, 10))
    data[0, 0] = np.nan
    with pytest.raises(DecompositionError):
        decompose(data)


def test_compose_pose(motion_dataset):
    dec = decompose_dataset(motion_dataset)
    np.testing.assert_array_equal(compose_pose(dec, {}), dec.neutral_pose)
    k = 77
    weights = {i + 1: dec.control_signals[i, k] for i in range(N_DOF)}
    np.testing.assert_allclose(compose_pose(dec, weights), motion_dataset.poses[k], atol=1e-9)


def test_compose_pose_is_linear(motion_dataset):
    dec = decompose_dataset(motion_dataset)
    w1 = {1: 0.2, 3: -0.1}
    w2 = {1: 0.05, 2: 0.3}
    a, b = 1.5, -0.7
    mixed = {i: a * w1.get(i, 0.0) + b * w2.get(i, 0.0) for i in (1, 2, 3)}
    n = dec.neutral_pose
    np.testing.assert_allclose(compose_pose(dec, mixed) - n,
                               a * (compose_pose(dec, w1) - n) + b * (compose_pose(dec, w2) - n), atol=1e-12)


def test_anti_orbiting_recipe(motion_dataset):
    dec = decompose_dataset(motion_dataset)
    w = 2 * np.pi * 0.2
    for t in np.linspace(0, 5, 11):
        pose = compose_pose(dec, {1: 1.2 * np.sin(w * t), 4: 0.8 * np.sin(w * t + np.pi)})
        expected = dec.neutral_pose + 1.2 * np.sin(w * t) * dec.component(1) - 0.8 * np.sin(w * t) * dec.component(4)
        np.testing.assert_allclose(pose, expected, atol=1e-12)


def test_compose_clamps_with_warning(motion_dataset):
    dec = decompose_dataset(motion_dataset)
    with pytest.warns(PoseClampWarning):
        pose = compose_pose(dec, {1: 100.0})
    assert np.max(np.abs(pose)) <= np.pi


def test_mask_full_and_empty():
    rng = np.random.default_rng(4)
    v = rng.standard_normal(N_DOF)
    np.testing.assert_array_equal(mask_component(v, range(1, 46)), v)
    with pytest.warns(EmptyMaskWarning):
        out = mask_component(v, [])
    np.testing.assert_array_equal(out, 0.0)


def test_mask_top_six():
    rng = np.random.default_rng(5)
    v = rng.standard_normal(N_DOF)
    v /= np.linalg.norm(v)
    keep = top_dofs(v, 6)
    expected = sorted(np.argsort(np.abs(v))[-6:] + 1)
    assert sorted(keep) == expected
    out = mask_component(v, keep, renormalize=True)
    assert np.count_nonzero(out == 0) == 39
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.sets(st.integers(1, 45), min_size=1))
def test_mask_idempotent(k):
    v = np.random.default_rng(6).standard_normal(N_DOF)
    once = mask_component(v, k)
    np.testing.assert_array_equal(mask_component(once, k), once)


def test_mask_rejects_bad_index():
    with pytest.raises(IndexError):
        mask_component(np.ones(N_DOF), [0])


def _signal_dec(a, b, rate=240.0):
    signals = np.zeros((N_DOF, len(a)))
    signals[0], signals[1] = a, b
    return PrincipalDecomposition(np.zeros(N_DOF), np.eye(N_DOF), np.ones(N_DOF), signals, rate)


def _smooth_noise(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n + 200)
    return np.convolve(x, np.hanning(41), mode="same")[100:100 + n]


def test_synergy_shift():
    n, shift = 28800, 120
    base = _smooth_noise(n + shift, 7)
    a, b = base[shift:], base[:n]  # b trails a by 0.5 s
    rep = detect_synergies(_signal_dec(a, b), 1, 2)
    assert rep.correlation == pytest.approx(1.0, abs=0.01)
    assert rep.lag == pytest.approx(0.5, abs=1 / 240)


def test_synergy_anti_phase():
    a = _smooth_noise(5000, 8)
    rep = detect_synergies(_signal_dec(a, -a), 1, 2)
    assert rep.correlation == pytest.approx(-1.0, abs=1e-9)
    assert rep.lag == 0.0


def test_synergy_independent_noise():
    rng = np.random.default_rng(9)
    a, b = rng.standard_normal((2, 28800))
    rep = detect_synergies(_signal_dec(a, b), 1, 2)
    assert abs(rep.correlation) < 0.05


def test_synergy_undefined_for_constant_signal():
    rep = detect_synergies(_signal_dec(np.zeros(100), np.ones(100)), 1, 2)
    assert not rep.defined


def test_save_load_round_trip(tmp_path, motion_dataset):
    dec = decompose_dataset(motion_dataset)
    save_decomposition(dec, tmp_path / "dec")
    back = load_decomposition(tmp_path / "dec")
    np.testing.assert_array_equal(back.components, dec.components)
    np.testing.assert_array_equal(back.control_signals, dec.control_signals)
    np.testing.assert_array_equal(back.neutral_pose, dec.neutral_pose)
    np.testing.assert_array_equal(back.eigenvalues, dec.eigenvalues)
    assert back.sample_rate == dec.sample_rate


def test_load_missing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_decomposition(tmp_path / "nope")


def test_reconstruction_source_matches_data(motion_dataset):
    dec = decompose_dataset(motion_dataset)
    src = Reconstruction(dec)
    for k in (0, 10, 200):
        np.testing.assert_allclose(src.pose(k / 240.0), motion_dataset.poses[k], atol=1e-12)
    partial = Reconstruction(dec, 1)
    np.testing.assert_allclose(partial.pose(0.0), dec.reconstruct(1)[0], atol=1e-12)


def test_masked_pattern_keeps_other_dofs_neutral(motion_dataset):
    dec = decompose_dataset(motion_dataset)
    src = MaskedPattern(dec, 1, [1, 2, 3])
    p = src.pose(0.3)
    np.testing.assert_array_equal(p[3:], dec.neutral_pose[3:])
