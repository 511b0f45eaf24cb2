"""Sinusoidal-excitation transfer-function estimation.

A plant is driven by ``u(t) = A sin(ωt)``; after the transient has died out
the output is correlated with ``cos(ωt)`` and ``sin(ωt)`` over exactly ``n``
periods (trapezoid rule)::

    y_c = ∫ y cos(ωt) dt,   y_s = ∫ y sin(ωt) dt
    G   = 2 √(y_c² + y_s²) / (A n T),   Φ = atan2(y_c, y_s)

Plants follow a two-method protocol: ``initial_state()`` and
``advance(state, t0, dt, n, u_fn) -> (state, y)`` where ``y`` holds the
output at ``t0 + dt, ..., t0 + n dt``.
"""

from __future__ import annotations

import csv
import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.integrate import trapezoid
from scipy.linalg import expm

from ._parallel import ordered_map
from .freefall import DEFAULT_DT, ConstantPose, FunctionSource, clamp_pose, simulate, trim_state

DEFAULT_GRID = np.logspace(-2, 2, 40)
STEADY_TOLERANCE = 0.01
MAX_TRANSIENT_PERIODS = 50
LTI_SAMPLES_PER_PERIOD = 128
MIN_SAMPLES_PER_PERIOD = 32
RAMP_PERIODS = 2
RAMP_TIME = 5.0


class SteadyStateError(RuntimeError):
    """The output did not settle into a periodic response."""


# ---------------------------------------------------------------------------
# plants


class LTIPlant:
    """State-space test plant, discretised exactly for piecewise-linear input.

    ``saturation`` clips the input to ``±saturation`` before it enters the
    linear dynamics.
    """

    samples_per_period = LTI_SAMPLES_PER_PERIOD

    def __init__(self, a, b, c, d=0.0, name="lti", saturation=None):
        self.a = np.atleast_2d(np.asarray(a, dtype=float))
        self.b = np.asarray(b, dtype=float).reshape(-1, 1)
        self.c = np.asarray(c, dtype=float).reshape(1, -1)
        self.d = float(d)
        self.name = name
        self.saturation = saturation
        self._disc = {}

    def transfer(self, omega):
        """Analytic complex response at ``omega`` (ignores saturation)."""
        s = 1j * np.asarray(omega, dtype=float)
        n = self.a.shape[0]
        out = []
        for sk in np.atleast_1d(s):
            out.append((self.c @ np.linalg.solve(sk * np.eye(n) - self.a, self.b))[0, 0] + self.d)
        return np.array(out)

    def _discrete(self, dt):
        key = float(dt)
        hit = self._disc.get(key)
        if hit is None:
            n = self.a.shape[0]
            m = np.zeros((n + 2, n + 2))
            m[:n, :n] = self.a
            m[:n, n:n + 1] = self.b
            m[n, n + 1] = 1.0
            e = expm(m * dt)
            hit = self._disc[key] = (e[:n, :n], e[:n, n], e[:n, n + 1] / dt)
        return hit

    def _input(self, u):
        return u if self.saturation is None else np.clip(u, -self.saturation, self.saturation)

    def initial_state(self):
        return np.zeros(self.a.shape[0])

    def output(self, state):
        return float(self.c[0] @ state)

    def advance(self, state, t0, dt, n, u_fn):
        phi, g0, g1 = self._discrete(dt)
        t = t0 + dt * np.arange(n + 1)
        u = self._input(np.array([u_fn(tk) for tk in t]))
        x = np.array(state, dtype=float)
        y = np.empty(n)
        c = self.c[0]
        for k in range(n):
            x = phi @ x + g0 * u[k] + g1 * (u[k + 1] - u[k])
            y[k] = c @ x + self.d * u[k + 1]
        return x, y


def first_order_plant():
    return LTIPlant([[-1.0]], [1.0], [1.0], name="lti:first-order")


def integrator_plant():
    return LTIPlant([[0.0]], [1.0], [1.0], name="lti:integrator")


def second_order_plant(omega_n=2.0, zeta=0.2):
    return LTIPlant([[0.0, 1.0], [-omega_n ** 2, -2 * zeta * omega_n]], [0.0, omega_n ** 2], [1.0, 0.0],
                    name="lti:second-order")


def saturating_plant(limit=0.5):
    return LTIPlant([[-1.0]], [1.0], [1.0], name="lti:saturating", saturation=limit)


EMBEDDED_PLANTS = {
    "lti:first-order": first_order_plant,
    "lti:integrator": integrator_plant,
    "lti:second-order": second_order_plant,
    "lti:saturating": saturating_plant,
}


def embedded_plant(name):
    try:
        return EMBEDDED_PLANTS[name]()
    except KeyError:
        raise ValueError(f"unknown plant {name!r}; choose from {sorted(EMBEDDED_PLANTS)}") from None


class PatternMap:
    """Pattern angle to pose: ``neutral + u · pattern``."""

    def __init__(self, neutral, pattern):
        self.neutral = np.asarray(neutral, dtype=float)
        self.pattern = np.asarray(pattern, dtype=float)

    def __call__(self, u):
        return clamp_pose(self.neutral + u * self.pattern)


class SkydiverDynamics:
    """The free-fall simulator seen through one output channel."""

    channels = ("yaw_rate", "vertical_speed", "roll_rate", "pitch_rate")

    def __init__(self, config, output="yaw_rate", dt=DEFAULT_DT):
        if output not in self.channels:
            raise ValueError(f"unknown output channel {output!r}")
        self.config = config
        self.output = output
        self.dt = dt

    def initial_state(self, neutral):
        return trim_state(self.config, neutral)

    def output_of(self, state):
        if self.output == "yaw_rate":
            return state.yaw_rate
        if self.output == "vertical_speed":
            return float(state.velocity[2])
        return float(state.omega[0 if self.output == "roll_rate" else 1])

    def _channel(self, traj):
        if self.output == "yaw_rate":
            return traj.yaw_rate
        if self.output == "vertical_speed":
            return traj.vertical_speed
        return traj.omega[:, 0 if self.output == "roll_rate" else 1]

    def advance_poses(self, state, t0, dt, n, pose_fn):
        from dataclasses import replace

        traj = simulate(FunctionSource(pose_fn), n * dt, dt=dt, init=replace(state, time=t0),
                        config=self.config, record_poses=False)
        return traj.state(len(traj) - 1), self._channel(traj)[1:]

    def run(self, source, duration, dt, init):
        return simulate(source, duration, dt=dt, init=init, config=self.config)


class PatternPlant:
    """Body actuated by a movement pattern: pattern angle in, one motion channel out."""

    def __init__(self, dynamics, pose_map, neutral=None, name="pattern"):
        self.dynamics = dynamics
        self.pose_map = pose_map
        self.neutral = pose_map(0.0) if neutral is None else np.asarray(neutral, dtype=float)
        self.name = name
        self._init = None

    @classmethod
    def skydiver(cls, config, neutral, pattern, output="yaw_rate"):
        return cls(SkydiverDynamics(config, output), PatternMap(neutral, pattern), neutral)

    @property
    def samples_per_period(self):
        return None

    def sample_count(self, period):
        return max(MIN_SAMPLES_PER_PERIOD, math.ceil(period / DEFAULT_DT - 1e-9))

    def initial_state(self):
        if self._init is None:
            self._init = self.dynamics.initial_state(self.neutral)
        return self._init

    def output(self, state):
        return self.dynamics.output_of(state)

    def advance(self, state, t0, dt, n, u_fn):
        return self.dynamics.advance_poses(state, t0, dt, n, lambda t: self.pose_map(u_fn(t)))


# ---------------------------------------------------------------------------
# frequency response


@dataclass(frozen=True)
class FrequencyResponse:
    omega: np.ndarray
    gain: np.ndarray
    phase: np.ndarray  # rad, unwrapped across the valid grid points
    amplitude: float
    cycles: int
    channel: str = "yaw_rate"
    errors: dict = field(default_factory=dict)  # grid index -> message
    raw_phase: np.ndarray | None = None  # rad, straight from atan2

    @property
    def gain_db(self):
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(self.gain)

    @property
    def phase_deg(self):
        return np.degrees(self.phase)

    @property
    def valid(self):
        return np.isfinite(self.gain) & np.isfinite(self.phase)

    def complex(self):
        return self.gain * np.exp(1j * self.phase)

    @classmethod
    def from_complex(cls, omega, values, amplitude=1.0, cycles=0, channel="analytic"):
        values = np.asarray(values, dtype=complex)
        raw = np.angle(values)
        return cls(np.asarray(omega, float), np.abs(values), np.unwrap(raw), amplitude, cycles, channel, {}, raw)

    @classmethod
    def from_transfer_function(cls, num, den, omega=DEFAULT_GRID):
        _, h = signal.freqs(num, den, worN=np.asarray(omega, dtype=float))
        return cls.from_complex(omega, h)


def _excitation(amplitude, omega, ramp):
    def u(t):
        env = 1.0 if t >= ramp else 0.5 * (1.0 - math.cos(math.pi * t / ramp))
        return amplitude * env * math.sin(omega * t)

    def u_plain(t):
        return amplitude * math.sin(omega * t)

    return u if ramp > 0 else u_plain


def _rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def measure_point(plant, omega, amplitude, cycles=10, ramp_periods=RAMP_PERIODS, ramp_time=RAMP_TIME,
                  max_transient=MAX_TRANSIENT_PERIODS, transient_scale=1.0, samples=None):
    """``(gain, phase)`` at one frequency.

    The excitation fades in (raised cosine) over at least ``ramp_periods``
    periods and at least ``ramp_time`` seconds, so that slow plant modes are
    barely excited by the switch-on at high frequencies. Then whole periods are discarded until two successive ones differ by
    less than 1 % RMS. ``transient_scale`` > 1 discards proportionally more.
    """
    period = 2.0 * math.pi / omega
    if samples is None:
        samples = plant.samples_per_period or plant.sample_count(period)
    dt = period / samples
    if ramp_periods or ramp_time:
        ramp_periods = max(int(ramp_periods), math.ceil(ramp_time / period - 1e-9))
    ramp = ramp_periods * period
    u_fn = _excitation(amplitude, omega, ramp)
    state = plant.initial_state()
    t = 0.0
    if ramp_periods:
        state, _ = plant.advance(state, 0.0, dt, ramp_periods * samples, u_fn)
        t = ramp_periods * samples * dt
    prev = None
    discarded = 0
    while True:
        state, y = plant.advance(state, t, dt, samples, u_fn)
        t = t0 = t + samples * dt
        if prev is not None:
            scale = _rms(y)
            if _rms(y - prev) <= STEADY_TOLERANCE * scale or scale == 0.0:
                break
        prev = y
        discarded += 1
        if discarded > max_transient:
            raise SteadyStateError(f"no periodic steady state after {max_transient} periods at omega={omega:g}")
    extra = int(math.ceil((transient_scale - 1.0) * (discarded + ramp_periods)))
    if extra > 0:
        state, y = plant.advance(state, t, dt, extra * samples, u_fn)
        t = t0 = t + extra * samples * dt
    n = cycles * samples
    state, ym = plant.advance(state, t0, dt, n, u_fn)
    yy = np.concatenate([[y[-1]], ym])
    tt = t0 + dt * np.arange(n + 1)
    yc = trapezoid(yy * np.cos(omega * tt), tt)
    ys = trapezoid(yy * np.sin(omega * tt), tt)
    gain = 2.0 * math.hypot(yc, ys) / (amplitude * cycles * period)
    return gain, math.atan2(yc, ys)


def _point(omega, plant, amplitude, cycles, kwargs):
    try:
        return measure_point(plant, omega, amplitude, cycles, **kwargs), None
    except Exception as exc:  # recorded per frequency, the sweep goes on
        return (float("nan"), float("nan")), f"{type(exc).__name__}: {exc}"


def frequency_response(plant, amplitude=1.0, grid=None, cycles=10, workers=None, channel=None, **kwargs):
    """Gain and unwrapped phase of ``plant`` over ``grid`` (rad/s)."""
    if not amplitude > 0:
        raise ValueError("amplitude must be > 0")
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0) or np.any(grid <= 0):
        raise ValueError("grid must be positive and strictly increasing")
    run = functools.partial(_point, plant=plant, amplitude=amplitude, cycles=cycles, kwargs=kwargs)
    results = ordered_map(run, grid, workers)
    gain = np.array([r[0][0] for r in results])
    raw = np.array([r[0][1] for r in results])
    errors = {k: r[1] for k, r in enumerate(results) if r[1] is not None}
    phase = raw.copy()
    ok = np.isfinite(raw)
    phase[ok] = np.unwrap(raw[ok])
    if channel is None:
        channel = getattr(getattr(plant, "dynamics", None), "output", "output")
    return FrequencyResponse(grid, gain, phase, float(amplitude), int(cycles), channel, errors, raw)


@dataclass(frozen=True)
class LinearityReport:
    max_gain_deviation_db: float
    max_phase_deviation_deg: float
    gain_spread_db: np.ndarray
    phase_spread_deg: np.ndarray
    responses: tuple


def linearity_check(plant, amplitudes, grid=None, cycles=10, workers=None, **kwargs):
    """Spread of gain (dB) and phase (deg) across excitation amplitudes."""
    amplitudes = list(amplitudes)
    if len(amplitudes) < 2:
        raise ValueError("linearity check needs at least two amplitudes")
    responses = [frequency_response(plant, a, grid, cycles, workers, **kwargs) for a in amplitudes]
    for r in responses:
        if r.errors:
            k, msg = next(iter(r.errors.items()))
            raise SteadyStateError(f"amplitude {r.amplitude:g}, omega {r.omega[k]:g}: {msg}")
    gdb = np.array([r.gain_db for r in responses])
    ph = np.array([r.phase_deg for r in responses])
    gs = gdb.max(axis=0) - gdb.min(axis=0)
    ps = ph.max(axis=0) - ph.min(axis=0)
    return LinearityReport(float(np.max(gs)), float(np.max(ps)), gs, ps, tuple(responses))


# ---------------------------------------------------------------------------
# margins


@dataclass(frozen=True)
class MarginReport:
    gain_margin_db: float  # inf when the phase never crosses -180 deg in the grid
    phase_margin_deg: float  # inf when |L| stays below 1, nan when it stays above
    phase_crossover_rad_s: float | None
    gain_crossover_rad_s: float | None
    loop_gain: float
    minimum_phase: bool | None = None

    @property
    def has_phase_crossover(self):
        return self.phase_crossover_rad_s is not None

    @property
    def has_gain_crossover(self):
        return self.gain_crossover_rad_s is not None

    def to_dict(self):
        def num(x):
            if x is None:
                return "no crossover"
            if math.isinf(x):
                return "infinite"
            if math.isnan(x):
                return "undefined"
            return x

        return {
            "gain_margin_db": num(self.gain_margin_db),
            "phase_margin_deg": num(self.phase_margin_deg),
            "phase_crossover_rad_s": num(self.phase_crossover_rad_s),
            "gain_crossover_rad_s": num(self.gain_crossover_rad_s),
            "loop_gain": self.loop_gain,
            "minimum_phase": self.minimum_phase,
        }


def _interp_log(w0, w1, f):
    return math.exp(math.log(w0) + f * (math.log(w1) - math.log(w0)))


def margins(fr, k_p=1.0, minimum_phase=None):
    """Gain and phase margins of the loop ``k_p · G(jω)``.

    Crossings are located by linear interpolation in log ω; with several
    crossings the smallest margin is reported.
    """
    if not k_p > 0:
        raise ValueError("k_p must be > 0")
    ok = fr.valid & (fr.gain > 0)
    w = fr.omega[ok]
    mag = 20.0 * np.log10(k_p * fr.gain[ok])
    ph = np.degrees(fr.phase[ok])
    gm, w_pc = math.inf, None
    pm, w_gc = None, None
    for i in range(len(w) - 1):
        lo, hi = sorted((ph[i], ph[i + 1]))
        k_lo = math.ceil((lo + 180.0) / 360.0)
        k_hi = math.floor((hi + 180.0) / 360.0)
        for k in range(k_lo, k_hi + 1):
            target = -180.0 + 360.0 * k
            if ph[i + 1] == ph[i]:
                f = 0.0
            else:
                f = (target - ph[i]) / (ph[i + 1] - ph[i])
            m = mag[i] + f * (mag[i + 1] - mag[i])
            if -m < gm:
                gm, w_pc = -m, _interp_log(w[i], w[i + 1], f)
        if (mag[i] >= 0.0) != (mag[i + 1] >= 0.0) or mag[i] == 0.0:
            f = 0.0 if mag[i + 1] == mag[i] else -mag[i] / (mag[i + 1] - mag[i])
            p = ph[i] + f * (ph[i + 1] - ph[i])
            margin = (p + 180.0 + 180.0) % 360.0 - 180.0
            if pm is None or margin < pm:
                pm, w_gc = margin, _interp_log(w[i], w[i + 1], f)
    if pm is None:
        pm = math.inf if len(mag) and np.all(mag < 0) else math.nan
    return MarginReport(float(gm), float(pm), w_pc, w_gc, float(k_p), minimum_phase)


# ---------------------------------------------------------------------------
# step response


@dataclass(frozen=True)
class StepFeatures:
    initial_sign: int
    steady_value: float
    rise_time: float  # s, 10 % to 90 % of the steady value; nan when not reached
    nonminimum_phase: bool


@dataclass(frozen=True)
class StepResponse:
    time: np.ndarray
    output: np.ndarray
    features: StepFeatures
    trajectory: object = None


def _crossing_time(t, y, level):
    idx = np.flatnonzero(y >= level)
    if len(idx) == 0:
        return math.nan
    k = int(idx[0])
    if k == 0:
        return float(t[0])
    f = (level - y[k - 1]) / (y[k] - y[k - 1])
    return float(t[k - 1] + f * (t[k] - t[k - 1]))


def step_features(time, y, rel_threshold=1e-3):
    time = np.asarray(time, dtype=float)
    y = np.asarray(y, dtype=float)
    y0 = y[0]
    dy = y - y0
    peak = float(np.max(np.abs(dy))) if len(dy) else 0.0
    tail = dy[int(len(dy) * 0.8):]
    steady = float(np.mean(tail)) if len(tail) else 0.0
    if peak < 1e-12:
        return StepFeatures(0, steady + y0, math.nan, False)
    moving = np.flatnonzero(np.abs(dy) > rel_threshold * peak)
    initial = int(np.sign(dy[moving[0]]))
    s = np.sign(steady)
    rise = math.nan
    if s != 0:
        z = s * dy
        rise = _crossing_time(time, z, 0.9 * abs(steady)) - _crossing_time(time, z, 0.1 * abs(steady))
    nmp = bool(s != 0 and initial == -s and abs(steady) > rel_threshold * peak)
    return StepFeatures(initial, steady + y0, rise, nmp)


def step_response(plant, amplitude=1.0, duration=10.0, dt=DEFAULT_DT):
    """Response to a pattern-angle step of size ``amplitude`` applied at t = 0."""
    if not amplitude > 0:
        raise ValueError("amplitude must be > 0")
    n = int(round(duration / dt))
    traj = None
    dyn = getattr(plant, "dynamics", None)
    if isinstance(dyn, SkydiverDynamics):
        traj = simulate(ConstantPose(plant.pose_map(amplitude)), n * dt, dt=dt, init=plant.initial_state(),
                        config=dyn.config)
        y = dyn._channel(traj)
        t = traj.time
    else:
        state = plant.initial_state()
        y0 = plant.output(state)
        _, ys = plant.advance(state, 0.0, dt, n, lambda _t: amplitude)
        y = np.concatenate([[y0], ys])
        t = dt * np.arange(n + 1)
    return StepResponse(t, y, step_features(t, y), traj)


# ---------------------------------------------------------------------------
# export


def write_bode_csv(path, fr):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["omega_rad_s", "gain", "gain_db", "phase_deg"])
        for row in zip(fr.omega, fr.gain, fr.gain_db, fr.phase_deg):
            w.writerow([repr(float(v)) for v in row])


def read_bode_csv(path, amplitude=1.0, cycles=0):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["omega_rad_s", "gain", "gain_db", "phase_deg"]:
        raise ValueError(f"{path}: not a Bode CSV")
    data = np.array(rows[1:], dtype=float).reshape(-1, 4)
    return FrequencyResponse(data[:, 0], data[:, 1], np.radians(data[:, 3]), amplitude, cycles, "file", {},
                             np.angle(np.exp(1j * np.radians(data[:, 3]))))


def write_margins_json(path, report):
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")


def write_bode_svg(path, fr, title=None):
    """Two-panel Bode plot (gain in dB and phase in degrees over log ω)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ok = fr.valid
    fig, (ax_g, ax_p) = plt.subplots(2, 1, sharex=True, figsize=(6, 5))
    ax_g.semilogx(fr.omega[ok], fr.gain_db[ok])
    ax_g.set_ylabel("gain [dB]")
    ax_g.grid(True, which="both", alpha=0.3)
    ax_p.semilogx(fr.omega[ok], fr.phase_deg[ok])
    ax_p.set_ylabel("phase [deg]")
    ax_p.set_xlabel("omega [rad/s]")
    ax_p.grid(True, which="both", alpha=0.3)
    if title:
        ax_g.set_title(title)
    fig.tight_layout()
    with plt.rc_context({"svg.hashsalt": "bodyflight"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
