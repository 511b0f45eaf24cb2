"""Motion-capture datasets and their CSV files.

A motion CSV has a ``t_s`` column followed either by the 45 joint Euler
columns (``lumbar_psi_rad`` ...) or by 23 × 4 segment quaternion columns
(``pelvis_qw`` ...). The layout is detected from the header.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .body import POSE_COLUMNS, QUAT_COLUMNS, QuatSample, quat_to_pose, validate_pose

TIME_TOLERANCE = 1e-6


class MotionFormatError(ValueError):
    """A motion file has an unrecognised header or malformed rows."""


@dataclass(frozen=True)
class MotionDataset:
    times: np.ndarray  # (N,) s, uniformly spaced
    poses: np.ndarray  # (N, 45) rad
    sample_rate: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.atleast_2d(np.asarray(self.poses, dtype=float))
        if len(t) == 0 or p.shape[0] != len(t):
            raise ValueError("dataset must hold one pose per timestamp and at least one sample")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        check_uniform(t, self.sample_rate)
        for row in p:
            validate_pose(row, n_dof=p.shape[1])
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "poses", p)

    def __len__(self):
        return len(self.times)

    @property
    def duration(self):
        """Covered time, ``N / sample_rate`` (each sample holds for one period)."""
        return len(self.times) / self.sample_rate

    @classmethod
    def from_poses(cls, poses, sample_rate=240.0, t0=0.0):
        poses = np.atleast_2d(np.asarray(poses, dtype=float))
        if not sample_rate > 0:
            raise ValueError("sample_rate must be > 0")
        return cls(t0 + np.arange(len(poses)) / sample_rate, poses, float(sample_rate))

    @classmethod
    def constant(cls, pose, duration, sample_rate=240.0):
        n = int(round(duration * sample_rate))
        return cls.from_poses(np.tile(np.asarray(pose, dtype=float), (n, 1)), sample_rate)


def check_uniform(times, sample_rate=None):
    """Raise unless ``times`` are evenly spaced (to 1e-6 s); returns the rate."""
    times = np.asarray(times, dtype=float)
    if len(times) < 2:
        return sample_rate
    if sample_rate is None:
        sample_rate = (len(times) - 1) / (times[-1] - times[0])
        if abs(sample_rate - round(sample_rate)) < 1e-6 * sample_rate:
            sample_rate = float(round(sample_rate))
    expected = times[0] + np.arange(len(times)) / sample_rate
    worst = np.max(np.abs(times - expected))
    if not np.isfinite(worst) or worst > TIME_TOLERANCE:
        raise ValueError(f"non-uniform timestamps (deviation {worst:.3g} s from a {sample_rate:g} Hz grid)")
    return float(sample_rate)


def _detect(header):
    if not header or header[0] != "t_s":
        raise MotionFormatError("first column must be t_s")
    cols = tuple(header[1:])
    if cols == POSE_COLUMNS:
        return "euler"
    if cols == QUAT_COLUMNS:
        return "quaternion"
    raise MotionFormatError(
        f"unrecognised motion header with {len(cols)} data columns "
        f"(expected {len(POSE_COLUMNS)} Euler or {len(QUAT_COLUMNS)} quaternion columns)"
    )


def read_motion_csv(path, mapping=None, config=None, sample_rate=None):
    """Load a motion CSV into a :class:`MotionDataset`; quaternion files are converted to poses."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MotionFormatError(f"{path}: empty file") from None
        kind = _detect([h.strip() for h in header])
        try:
            rows = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
        except ValueError as exc:
            raise MotionFormatError(f"{path}: {exc}") from None
    if rows.size == 0:
        raise MotionFormatError(f"{path}: no samples")
    if rows.shape[1] != len(header):
        raise MotionFormatError(f"{path}: ragged rows")
    times = rows[:, 0]
    if np.any(np.diff(times) <= 0):
        raise ValueError(f"{path}: timestamps must be strictly increasing")
    rate = check_uniform(times, sample_rate) if len(times) > 1 else (sample_rate or 240.0)
    if kind == "euler":
        poses = rows[:, 1:]
    else:
        poses = np.array([
            quat_to_pose(QuatSample(t, r.reshape(-1, 4)), mapping, config) for t, r in zip(times, rows[:, 1:])
        ])
    return MotionDataset(times, poses, rate)


def write_motion_csv(path, dataset):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", *POSE_COLUMNS])
        for t, p in zip(dataset.times, dataset.poses):
            w.writerow([repr(float(t)), *(repr(float(a)) for a in p)])
