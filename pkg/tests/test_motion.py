import numpy as np
import pytest

from bodyflight.body import N_DOF, POSE_COLUMNS, QUAT_COLUMNS, XSENS_SEGMENTS, pose_to_quat
from bodyflight.motion import MotionDataset, MotionFormatError, check_uniform, read_motion_csv, write_motion_csv


def test_round_trip(tmp_path, motion_dataset):
    path = tmp_path / "m.csv"
    write_motion_csv(path, motion_dataset)
    back = read_motion_csv(path)
    np.testing.assert_array_equal(back.poses, motion_dataset.poses)
    np.testing.assert_array_equal(back.times, motion_dataset.times)
    assert back.sample_rate == 240.0


def test_duration_counts_sample_periods(neutral):
    ds = MotionDataset.constant(neutral, 2.0, 240.0)
    assert len(ds) == 480
    assert ds.duration == pytest.approx(2.0)


def test_quaternion_layout_detected(tmp_path, neutral):
    path = tmp_path / "q.csv"
    poses = [neutral, neutral + 0.01]
    with open(path, "w") as fh:
        fh.write(",".join(["t_s", *QUAT_COLUMNS]) + "\n")
        for k, p in enumerate(poses):
            q = pose_to_quat(p).orientations.ravel()
            fh.write(",".join([repr(k / 240.0), *(repr(float(v)) for v in q)]) + "\n")
    ds = read_motion_csv(path)
    np.testing.assert_allclose(ds.poses, np.stack(poses), atol=1e-9)
    assert len(QUAT_COLUMNS) == 4 * len(XSENS_SEGMENTS)


def test_unknown_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t_s,a,b\n0,1,2\n")
    with pytest.raises(MotionFormatError, match="unrecognised"):
        read_motion_csv(path)


def test_missing_time_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(",".join(POSE_COLUMNS) + "\n")
    with pytest.raises(MotionFormatError, match="t_s"):
        read_motion_csv(path)


def test_empty_and_ragged(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(MotionFormatError):
        read_motion_csv(empty)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text(",".join(["t_s", *POSE_COLUMNS]) + "\n0,1,2\n")
    with pytest.raises(MotionFormatError):
        read_motion_csv(ragged)


def test_non_uniform_timestamps(tmp_path, neutral):
    path = tmp_path / "jitter.csv"
    with open(path, "w") as fh:
        fh.write(",".join(["t_s", *POSE_COLUMNS]) + "\n")
        for t in (0.0, 1 / 240, 2.5 / 240, 3 / 240):
            fh.write(",".join([repr(t), *(repr(float(v)) for v in neutral)]) + "\n")
    with pytest.raises(ValueError, match="non-uniform"):
        read_motion_csv(path)


def test_check_uniform_infers_rate():
    assert check_uniform(np.arange(100) / 240.0) == 240.0
    with pytest.raises(ValueError):
        check_uniform([0.0, 0.1, 0.3])


def test_dataset_validation(neutral):
    with pytest.raises(ValueError):
        MotionDataset(np.zeros(0), np.zeros((0, N_DOF)), 240.0)
    with pytest.raises(ValueError):
        MotionDataset.from_poses(np.full((2, N_DOF), 5.0))
    with pytest.raises(ValueError):
        MotionDataset.from_poses([neutral], sample_rate=0.0)
