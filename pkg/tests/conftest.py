import numpy as np
import pytest

from bodyflight.body import default_body_config, mirror_pose, standard_neutral_pose
from bodyflight.motion import MotionDataset, write_motion_csv


@pytest.fixture(scope="session")
def config():
    return default_body_config()


@pytest.fixture(scope="session")
def neutral():
    return standard_neutral_pose()


def synthetic_poses(n_samples=480, rate=240.0, seed=0, amplitude=0.05):
    """Neutral pose plus three sinusoidal joint patterns."""
    rng = np.random.default_rng(seed)
    t = np.arange(n_samples) / rate
    modes = rng.standard_normal((3, 45)) * amplitude
    signals = np.stack([
        np.sin(2 * np.pi * 0.5 * t),
        0.5 * np.sin(2 * np.pi * 1.3 * t + 1.0),
        0.2 * np.cos(2 * np.pi * 0.7 * t),
    ])
    return standard_neutral_pose() + signals.T @ modes


@pytest.fixture
def motion_dataset():
    return MotionDataset.from_poses(synthetic_poses(), 240.0)


@pytest.fixture
def motion_csv(tmp_path, motion_dataset):
    path = tmp_path / "motion.csv"
    write_motion_csv(path, motion_dataset)
    return path


def asymmetric_pose(neutral, amount=0.15):
    """Neutral pose with the left hip swung further out than the right."""
    pose = np.array(neutral, dtype=float)
    pose[3 * 9] += amount  # hip_l psi
    return pose


def symmetric_offset(seed=0, scale=0.1):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(45) * scale
    return 0.5 * (v + mirror_pose(v))


_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: numbered acceptance criterion")


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    if report.when == "call" or report.skipped or report.failed:
        if hasattr(report, "wasxfail"):
            outcome = "FAIL" if report.skipped else "PASS"
        elif report.skipped:
            outcome = "SKIP"
        else:
            outcome = "PASS" if report.passed else "FAIL"
        if _ACCEPTANCE.get(name) != "FAIL":
            _ACCEPTANCE[name] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        number = int(name.split("_")[2])
        label = " ".join(name.split("_")[3:])
        terminalreporter.write_line(f"criterion {number:2d} {_ACCEPTANCE[name]:4s} {label}")
