"""Movement components of recorded motion.

The pose sequence is stacked into a 45 × N matrix, centred row by row and
decomposed with a thin SVD. Columns of ``PC`` are the movement components,
``PCᵀ · data`` are their control signals (pattern angles) and the row means
form the neutral pose, so that every recorded pose is
``neutral + Σ α_i(t) · PC_i``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy import signal

from .body import N_DOF, POSE_COLUMNS
from .freefall import PoseClampWarning, PoseSource, clamp_pose
from .motion import check_uniform

DOMINANCE_THRESHOLD = 0.2
STILL_TOLERANCE = 1e-12  # rad per sample below which a recording counts as motionless


class DecompositionError(RuntimeError):
    """The SVD failed or produced non-finite output."""


class EmptyMaskWarning(UserWarning):
    """A component was masked with an empty index set."""


@dataclass(frozen=True)
class DataMatrix:
    values: np.ndarray  # (45, N) rad
    sample_rate: float
    centered: bool = True
    t0: float = 0.0

    @property
    def n_samples(self):
        return self.values.shape[1]


def build_data_matrix(dataset):
    """Row-centred data matrix and the neutral pose (row means)."""
    times = np.asarray(dataset.times, dtype=float)
    if len(times) == 0:
        raise ValueError("dataset is empty")
    check_uniform(times, dataset.sample_rate)
    data = np.asarray(dataset.poses, dtype=float).T.copy()
    neutral = data.mean(axis=1)
    data -= neutral[:, None]
    return DataMatrix(data, float(dataset.sample_rate), True, float(times[0])), neutral


@dataclass(frozen=True)
class PrincipalDecomposition:
    neutral_pose: np.ndarray  # (45,)
    components: np.ndarray  # (45, 45), columns are PC_1 .. PC_45
    eigenvalues: np.ndarray  # (45,) singular values, non-increasing
    control_signals: np.ndarray  # (45, N)
    sample_rate: float
    t0: float = 0.0

    @property
    def n_samples(self):
        return self.control_signals.shape[1]

    @property
    def times(self):
        return self.t0 + np.arange(self.n_samples) / self.sample_rate

    @property
    def duration(self):
        return self.n_samples / self.sample_rate

    @property
    def normalized_eigenvalues(self):
        top = self.eigenvalues[0]
        # a spectrum of centering roundoff means no motion, not one dominant component
        floor = STILL_TOLERANCE * np.sqrt(self.n_samples) * max(1.0, float(np.max(np.abs(self.neutral_pose))))
        return self.eigenvalues / top if top > floor else np.zeros_like(self.eigenvalues)

    def component(self, i):
        """Movement component ``i`` (1-based)."""
        _check_index(i, self.components.shape[1])
        return self.components[:, i - 1]

    def signal(self, i):
        _check_index(i, self.components.shape[1])
        return self.control_signals[i - 1]

    def dominant(self, threshold=DOMINANCE_THRESHOLD):
        """1-based indices whose max-normalised eigenvalue exceeds ``threshold``."""
        return [int(i) + 1 for i in np.flatnonzero(self.normalized_eigenvalues > threshold)]

    def reconstruct(self, n=None):
        """``(N, 45)`` poses rebuilt from the first ``n`` components (all by default)."""
        n = self.components.shape[1] if n is None else n
        _check_index(n, self.components.shape[1])
        return (self.neutral_pose[:, None] + self.components[:, :n] @ self.control_signals[:n]).T


def _check_index(i, n=N_DOF):
    if not 1 <= int(i) <= n:
        raise IndexError(f"component index {i} outside [1, {n}]")


def _fix_signs(u, signals):
    idx = np.argmax(np.abs(u), axis=0)
    flip = np.where(u[idx, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    return u * flip, signals * flip[:, None]


def decompose(matrix):
    """Thin SVD of the centred data matrix.

    Components are sign-normalised so that the largest-magnitude entry of
    each is positive. Fewer samples than DOFs still yield a full orthonormal
    basis; the extra components carry zero eigenvalues.
    """
    x = np.asarray(matrix.values if isinstance(matrix, DataMatrix) else matrix, dtype=float)
    rate = matrix.sample_rate if isinstance(matrix, DataMatrix) else 240.0
    t0 = matrix.t0 if isinstance(matrix, DataMatrix) else 0.0
    if not np.all(np.isfinite(x)):
        raise DecompositionError("data matrix contains non-finite values")
    dof = x.shape[0]
    try:
        u, s, _ = scipy.linalg.svd(x, full_matrices=False, lapack_driver="gesdd")
    except (np.linalg.LinAlgError, ValueError):
        try:
            u, s, _ = scipy.linalg.svd(x, full_matrices=False, lapack_driver="gesvd")
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise DecompositionError(f"SVD did not converge: {exc}") from exc
    if u.shape[1] < dof:
        u = np.hstack([u, scipy.linalg.null_space(u.T)])
        s = np.concatenate([s, np.zeros(dof - len(s))])
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(s))):
        raise DecompositionError("SVD produced non-finite values")
    signals = u.T @ x
    u, signals = _fix_signs(u, signals)
    return PrincipalDecomposition(
        neutral_pose=np.zeros(dof), components=u, eigenvalues=s,
        control_signals=signals, sample_rate=float(rate), t0=float(t0),
    )


def decompose_dataset(dataset):
    """:func:`build_data_matrix` followed by :func:`decompose`, with the neutral pose filled in."""
    matrix, neutral = build_data_matrix(dataset)
    dec = decompose(matrix)
    return PrincipalDecomposition(neutral, dec.components, dec.eigenvalues, dec.control_signals,
                                  dec.sample_rate, dec.t0)


def compose_pose(dec, weights):
    """``neutral + Σ α_i · PC_i`` for a mapping ``{i: α_i}`` (1-based indices).

    Angles beyond ±π are clamped with a :class:`PoseClampWarning`.
    """
    pose = dec.neutral_pose.copy()
    for i, alpha in weights.items():
        pose += float(alpha) * dec.component(i)
    return clamp_pose(pose)


def mask_component(component, k_eng, renormalize=False):
    """Zero every entry whose 1-based index is not in ``k_eng``."""
    component = np.asarray(component, dtype=float)
    keep = np.zeros(component.shape, dtype=bool)
    for k in k_eng:
        _check_index(k, len(component))
        keep[int(k) - 1] = True
    out = np.where(keep, component, 0.0)
    if not keep.any():
        warnings.warn("empty engagement set: masked component is zero", EmptyMaskWarning, stacklevel=2)
        return out
    if renormalize:
        norm = np.linalg.norm(out)
        if norm > 0:
            out = out / norm
    return out


def top_dofs(component, count):
    """1-based indices of the ``count`` largest-magnitude entries."""
    order = np.argsort(-np.abs(np.asarray(component)), kind="stable")
    return [int(k) + 1 for k in order[:count]]


@dataclass(frozen=True)
class SynergyReport:
    correlation: float  # signed peak of the normalised cross-correlation, nan when undefined
    lag: float  # s; positive when signal j trails signal i
    defined: bool = True


def normalized_xcorr(a, b):
    """Biased normalised cross-correlation of ``b`` against ``a`` and the integer lags."""
    a = np.asarray(a, dtype=float) - np.mean(a)
    b = np.asarray(b, dtype=float) - np.mean(b)
    scale = len(a) * np.std(a) * np.std(b)
    if not scale > 0:
        return None, None
    corr = signal.correlate(b, a, mode="full", method="fft") / scale
    lags = signal.correlation_lags(len(b), len(a), mode="full")
    return corr, lags


def detect_synergies(dec, i, j, max_lag=None):
    """Peak correlation between control signals ``i`` and ``j`` and its lag."""
    if i == j:
        raise ValueError("synergy detection needs two different components")
    corr, lags = normalized_xcorr(dec.signal(i), dec.signal(j))
    if corr is None:
        return SynergyReport(float("nan"), float("nan"), defined=False)
    if max_lag is not None:
        window = np.abs(lags) <= int(round(max_lag * dec.sample_rate))
        corr, lags = corr[window], lags[window]
    k = int(np.argmax(np.abs(corr)))
    return SynergyReport(float(np.clip(corr[k], -1.0, 1.0)), float(lags[k] / dec.sample_rate))


class Reconstruction(PoseSource):
    """Recorded motion rebuilt from the first ``n`` components, control signals interpolated linearly."""

    def __init__(self, dec, n=None):
        self.dec = dec
        self.n = dec.components.shape[1] if n is None else int(n)
        _check_index(self.n, dec.components.shape[1])
        self._pc = dec.components[:, :self.n]
        self._alpha = dec.control_signals[:self.n].T.copy()

    @property
    def duration(self):
        return self.dec.duration

    def alphas(self, t):
        x = (t - self.dec.t0) * self.dec.sample_rate
        last = self._alpha.shape[0] - 1
        if last == 0:
            return self._alpha[0]
        k = min(max(int(np.floor(x)), 0), last - 1)
        w = min(max(x - k, 0.0), 1.0)
        if w == 0.0:
            return self._alpha[k]
        return (1.0 - w) * self._alpha[k] + w * self._alpha[k + 1]

    def pose(self, t):
        return self.dec.neutral_pose + self._pc @ self.alphas(t)


class MaskedPattern(PoseSource):
    """One component engaged on a subset of DOFs, the rest held at neutral."""

    def __init__(self, dec, i, k_eng, signal=None):
        self.dec = dec
        self.vector = mask_component(dec.component(i), k_eng)
        self._sig = Reconstruction(dec, dec.components.shape[1]) if signal is None else None
        self._i = i
        self._signal = signal

    def alpha(self, t):
        if self._signal is not None:
            return float(self._signal(t))
        return float(self._sig.alphas(t)[self._i - 1])

    def pose(self, t):
        return clamp_pose(self.dec.neutral_pose + self.alpha(t) * self.vector)


# ---------------------------------------------------------------------------
# directory export


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else repr(float(v)) for v in row])


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def save_decomposition(dec, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = list(POSE_COLUMNS) if len(dec.neutral_pose) == N_DOF else [f"dof_{k + 1}" for k in range(len(dec.neutral_pose))]
    ncomp = dec.components.shape[1]
    _write_rows(d / "neutral_pose.csv", ["dof", "angle_rad"], [[n, v] for n, v in zip(names, dec.neutral_pose)])
    _write_rows(d / "components.csv", ["dof", *(f"pc_{i + 1}" for i in range(ncomp))],
                [[n, *row] for n, row in zip(names, dec.components)])
    _write_rows(d / "eigenvalues.csv", ["index", "singular_value", "normalized"],
                [[str(i + 1), s, v] for i, (s, v) in enumerate(zip(dec.eigenvalues, dec.normalized_eigenvalues))])
    _write_rows(d / "control_signals.csv", ["t_s", *(f"alpha_{i + 1}" for i in range(ncomp))],
                [[t, *col] for t, col in zip(dec.times, dec.control_signals.T)])


def load_decomposition(directory):
    d = Path(directory)
    for name in ("neutral_pose.csv", "components.csv", "eigenvalues.csv", "control_signals.csv"):
        if not (d / name).is_file():
            raise FileNotFoundError(f"decomposition directory {d} lacks {name}")
    _, rows = _read_rows(d / "neutral_pose.csv")
    neutral = np.array([float(r[1]) for r in rows])
    _, rows = _read_rows(d / "components.csv")
    comps = np.array([[float(v) for v in r[1:]] for r in rows])
    _, rows = _read_rows(d / "eigenvalues.csv")
    eig = np.array([float(r[1]) for r in rows])
    _, rows = _read_rows(d / "control_signals.csv")
    sig = np.array([[float(v) for v in r] for r in rows])
    times = sig[:, 0]
    rate = check_uniform(times) if len(times) > 1 else 240.0
    return PrincipalDecomposition(neutral, comps, eig, sig[:, 1:].T.copy(), float(rate), float(times[0]))


__all__ = [
    "DOMINANCE_THRESHOLD", "DataMatrix", "DecompositionError", "EmptyMaskWarning", "MaskedPattern",
    "PoseClampWarning", "PrincipalDecomposition", "Reconstruction", "SynergyReport", "build_data_matrix",
    "compose_pose", "decompose", "decompose_dataset", "detect_synergies", "load_decomposition",
    "mask_component", "normalized_xcorr", "save_decomposition", "top_dofs",
]
