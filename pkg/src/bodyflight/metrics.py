"""Yaw-rate based scores of a manoeuvre against a reference.

``err_n = Σ_{k=1..N} |Ω_ref(k) - Ω_n(k)| · δt`` accumulates the yaw-rate
discrepancy (the sample at t = 0 is the shared initial condition and is
left out), ``err_0`` is the same sum for a body that does not turn at all,
and ``sim_n = 1 - err_n / err_0``.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._parallel import ordered_map
from .freefall import DEFAULT_DT, simulate, trim_state
from .pca import Reconstruction

BASELINE_FLOOR = 1e-9


class UndefinedSimilarity(ValueError):
    """The reference never turns, so similarity has no baseline."""


@dataclass(frozen=True)
class SimilarityResult:
    err_n: float
    err_0: float
    sim_n: float


def _yaw_series(x):
    if hasattr(x, "yaw_rate"):
        return np.asarray(x.yaw_rate, dtype=float), float(x.time[1] - x.time[0]) if len(x.time) > 1 else None
    return np.asarray(x, dtype=float), None


def accumulated_error(a, b, dt):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"yaw series lengths differ ({len(a)} vs {len(b)})")
    return float(np.sum(np.abs(a[1:] - b[1:])) * dt)


def yaw_similarity(reference, candidate, dt=None):
    """Score ``candidate`` against ``reference``.

    Both are trajectories (anything with ``time`` and ``yaw_rate``) or plain
    yaw-rate arrays sampled at ``dt`` with the initial sample first.
    """
    ref, dt_ref = _yaw_series(reference)
    cand, dt_cand = _yaw_series(candidate)
    if dt_ref is not None and dt_cand is not None and abs(dt_ref - dt_cand) > 1e-12:
        raise ValueError(f"time steps differ ({dt_ref} vs {dt_cand})")
    dt = dt if dt is not None else (dt_ref or dt_cand)
    if dt is None:
        raise ValueError("dt is required for bare yaw-rate arrays")
    err_n = accumulated_error(ref, cand, dt)
    err_0 = float(np.sum(np.abs(ref[1:])) * dt)
    if err_0 <= BASELINE_FLOOR:
        raise UndefinedSimilarity(f"reference yaw rate never departs from zero (err_0 = {err_0:.3g})")
    return SimilarityResult(err_n, err_0, 1.0 - err_n / err_0)


@dataclass(frozen=True)
class SweepEntry:
    n: int
    err_n: float
    sim_n: float


def _run_reconstruction(n, dec, config, duration, dt, init):
    try:
        return simulate(Reconstruction(dec, n), duration, dt=dt, init=init, config=config, record_poses=False).yaw_rate
    except Exception as exc:
        raise RuntimeError(f"simulation with n={n} failed: {exc}") from exc


def similarity_sweep(dec, config, n_max=None, n_values=None, duration=None, dt=DEFAULT_DT, init=None, workers=None):
    """``sim_n`` of partial reconstructions against the full 45-component one.

    All runs share ``init`` (by default the trimmed state of the neutral
    pose) and ``dt``. ``n_values`` overrides the ``1..n_max`` range.
    """
    ncomp = dec.components.shape[1]
    if n_values is None:
        n_values = range(1, (n_max or ncomp) + 1)
    n_values = [int(n) for n in n_values]
    if duration is None:
        duration = dt * int(np.floor(dec.duration / dt + 1e-9))
    if init is None:
        init = trim_state(config, dec.neutral_pose)
    run = functools.partial(_run_reconstruction, dec=dec, config=config, duration=duration, dt=dt, init=init)
    wanted = sorted(set(n_values) | {ncomp})
    series = dict(zip(wanted, ordered_map(run, wanted, workers)))
    reference = series[ncomp]
    out = []
    for n in n_values:
        r = yaw_similarity(reference, series[n], dt)
        out.append(SweepEntry(n, r.err_n, r.sim_n))
    return out


def write_sweep_csv(path, entries):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "err_n", "sim_n"])
        for e in entries:
            w.writerow([e.n, repr(float(e.err_n)), repr(float(e.sim_n))])


def _overlap_correlation(reference, actual, lag):
    """Pearson correlation of ``actual[k + lag]`` with ``reference[k]`` over their overlap."""
    if lag >= 0:
        a, b = reference[:len(reference) - lag], actual[lag:]
    else:
        a, b = reference[-lag:], actual[:len(actual) + lag]
    a = a - a.mean()
    b = b - b.mean()
    scale = np.sqrt((a @ a) * (b @ b))
    return float(a @ b / scale) if scale > 0 else -np.inf


def tracking_delay(reference, actual, dt, max_lag=None):
    """Lag (s) at which ``actual`` best matches ``reference``; nan for constant input.

    Positive when ``actual`` trails the reference. Each lag is scored by the
    correlation over the overlapping samples only, so the peak sits at the
    true shift instead of being pulled towards zero lag. Lags are searched
    up to ``max_lag``; by default half the dominant period of the reference
    (a periodic reference makes the delay ambiguous beyond that), at most
    half the record. Resolution is ``dt``.
    """
    reference = np.asarray(reference, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if reference.shape != actual.shape:
        raise ValueError("series lengths differ")
    n = len(reference)
    if n < 2 or np.ptp(reference) == 0 or np.ptp(actual) == 0:
        return float("nan")
    if max_lag is None:
        spectrum = np.abs(np.fft.rfft(reference - reference.mean()))
        k = 1 + int(np.argmax(spectrum[1:])) if len(spectrum) > 1 else 1
        limit = min(n // 2, int(np.floor(0.5 * n / k)))
    else:
        limit = min(n - 2, int(round(max_lag / dt)))
    lags = np.arange(-limit, limit + 1)
    score = [_overlap_correlation(reference, actual, int(lag)) for lag in lags]
    return float(lags[int(np.argmax(score))] * dt)
