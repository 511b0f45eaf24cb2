"""Closed-loop tracking of a yaw-rate reference with movement patterns.

The controller samples the yaw rate once per integration step and commands
pattern angles for the end of the step (one-sample delay)::

    α₁  = k_p (Ω_ref - Ω) + k_ff Ω_ref        proportional + feedforward
    α₂₃ = k_d dΩ_ref/dt                        feedforward of the reference slope

Each command passes an amplitude clamp and then a rate clamp before it is
turned into a pose by a pattern combination.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._parallel import ordered_map
from .freefall import DEFAULT_DT, ControllerSource, clamp_pose
from .freqresp import DEFAULT_GRID, PatternMap, PatternPlant, SkydiverDynamics, frequency_response
from .metrics import tracking_delay

INSTABILITY_RATE = 20.0
UNIT_TOLERANCE = 1e-9


class ClosedLoopUnstable(RuntimeError):
    def __init__(self, time, rate):
        super().__init__(f"closed loop unstable at t={time:.4f} s (|yaw rate| = {abs(rate):.3g} rad/s)")
        self.time = time


# ---------------------------------------------------------------------------
# references


@dataclass(frozen=True)
class SineReference:
    amplitude: float = 3.5  # rad/s
    frequency: float = 0.2  # Hz

    def value(self, t):
        return self.amplitude * math.sin(2 * math.pi * self.frequency * t)

    def slope(self, t):
        w = 2 * math.pi * self.frequency
        return self.amplitude * w * math.cos(w * t)


@dataclass(frozen=True)
class StepReference:
    level: float
    start: float = 0.0

    def value(self, t):
        return self.level if t >= self.start else 0.0

    def slope(self, t):
        return 0.0


class TabulatedReference:
    """Linear interpolation of ``(time, value)`` samples, held constant outside."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.shape != self.values.shape or len(self.times) < 2 or np.any(np.diff(self.times) <= 0):
            raise ValueError("tabulated reference needs >= 2 samples with increasing times")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("tabulated reference values must be finite")
        self._slopes = np.diff(self.values) / np.diff(self.times)

    def value(self, t):
        return float(np.interp(t, self.times, self.values))

    def slope(self, t):
        if t < self.times[0] or t >= self.times[-1]:
            return 0.0
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return float(self._slopes[k])


# ---------------------------------------------------------------------------
# controller and limits


@dataclass(frozen=True)
class ControllerSpec:
    k_p: float = 2.5
    k_ff: float = 0.0
    k_d: float | None = None
    reference: object = SineReference()

    def __post_init__(self):
        for name in ("k_p", "k_ff"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.k_d is not None and not math.isfinite(self.k_d):
            raise ValueError("k_d must be finite")

    @property
    def variant(self):
        if self.k_d is not None:
            return "FF_derivative"
        return "P_plus_FF" if self.k_ff else "Proportional"

    def main_signal(self, t, yaw_rate):
        ref = self.reference.value(t)
        return self.k_p * (ref - yaw_rate) + self.k_ff * ref

    def pair_signal(self, t):
        return 0.0 if self.k_d is None else self.k_d * self.reference.slope(t)


@dataclass(frozen=True)
class ActuationLimits:
    max_angle: float = 1.5  # rad
    max_rate: float = 3.5  # rad/s

    def __post_init__(self):
        if not (self.max_angle > 0 and self.max_rate > 0):
            raise ValueError("actuation limits must be > 0")

    def apply(self, previous, command, dt):
        """Amplitude clamp, then rate clamp. Returns ``(value, saturated)``."""
        a = min(max(command, -self.max_angle), self.max_angle)
        step = self.max_rate * dt
        a = min(max(a, previous - step), previous + step)
        return a, a != command


class _NoLimits:
    def apply(self, previous, command, dt):
        return command, False


NO_LIMITS = _NoLimits()


# ---------------------------------------------------------------------------
# pattern combinations


def _unit(v, name):
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > UNIT_TOLERANCE:
        raise ValueError(f"{name} must have unit norm (got {np.linalg.norm(v):.6g})")
    return v


def _branch(alpha, neg, pos):
    return abs(alpha) * neg if alpha < 0 else alpha * pos


@dataclass(frozen=True)
class Single:
    pattern: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pattern", _unit(self.pattern, "pattern"))

    def offset(self, alpha, alpha_pair=0.0):
        return alpha * self.pattern


@dataclass(frozen=True)
class SignSwitched:
    """``|α| · neg`` for α < 0, ``α · pos`` otherwise."""

    neg: np.ndarray
    pos: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "neg", _unit(self.neg, "neg"))
        object.__setattr__(self, "pos", _unit(self.pos, "pos"))

    def offset(self, alpha, alpha_pair=0.0):
        return _branch(alpha, self.neg, self.pos)


@dataclass(frozen=True)
class Superposition:
    """Main pattern driven by ``α₁`` plus a sign-switched pair driven by ``α₂₃``."""

    main: np.ndarray
    neg: np.ndarray
    pos: np.ndarray

    def __post_init__(self):
        for name in ("main", "neg", "pos"):
            object.__setattr__(self, name, _unit(getattr(self, name), name))

    def offset(self, alpha, alpha_pair=0.0):
        return alpha * self.main + _branch(alpha_pair, self.neg, self.pos)


@dataclass(frozen=True)
class SynergyFamily:
    """``|α| (neg - k·neg_aux)`` for α < 0, ``α (pos - k·pos_aux)`` otherwise."""

    neg: np.ndarray
    neg_aux: np.ndarray
    pos: np.ndarray
    pos_aux: np.ndarray
    k: float = 0.0

    def __post_init__(self):
        for name in ("neg", "neg_aux", "pos", "pos_aux"):
            object.__setattr__(self, name, _unit(getattr(self, name), name))
        if not self.k >= 0:
            raise ValueError("k must be >= 0")

    def offset(self, alpha, alpha_pair=0.0):
        return _branch(alpha, self.neg - self.k * self.neg_aux, self.pos - self.k * self.pos_aux)

    def positive_pattern(self, k=None, normalize=True):
        k = self.k if k is None else k
        v = self.pos - k * self.pos_aux
        return v / np.linalg.norm(v) if normalize else v

    def with_k(self, k):
        return SynergyFamily(self.neg, self.neg_aux, self.pos, self.pos_aux, k)


def actuate(combination, alpha, alpha_pair=0.0, neutral=None):
    """Pose commanded by the pattern angles; ``alpha_pair`` only matters for :class:`Superposition`."""
    offset = combination.offset(float(alpha), float(alpha_pair))
    if neutral is None:
        return offset
    return clamp_pose(np.asarray(neutral, dtype=float) + offset)


class CombinationMap:
    """Single pattern angle to pose through a combination."""

    def __init__(self, combination, neutral):
        self.combination = combination
        self.neutral = np.asarray(neutral, dtype=float)

    def __call__(self, u):
        return actuate(self.combination, u, 0.0, self.neutral)


# ---------------------------------------------------------------------------
# surrogate plant


@dataclass(frozen=True)
class YawState:
    time: float
    yaw_rate: float


@dataclass(frozen=True)
class YawTrace:
    time: np.ndarray
    yaw_rate: np.ndarray


class SurrogateYawPlant:
    """Linear stand-in for the body's yaw dynamics.

    ``τ dΩ/dt = -λ Ω + e · (pose - neutral)``; ``e`` converts a pose offset
    into a yaw drive. ``leak = 0`` turns it into an integrator.
    """

    def __init__(self, effectiveness, neutral=None, time_constant=0.5, leak=1.0):
        self.effectiveness = np.asarray(effectiveness, dtype=float)
        self.neutral = np.zeros_like(self.effectiveness) if neutral is None else np.asarray(neutral, float)
        if not time_constant > 0 or leak < 0:
            raise ValueError("time_constant must be > 0 and leak >= 0")
        self.time_constant = float(time_constant)
        self.leak = float(leak)

    @classmethod
    def agile_pair(cls, seed, n_dof=45, k_d=0.16):
        """Random plant with orthonormal main / neg / pos patterns.

        Returns ``(plant, main, neg, pos)``. The pair is strong enough that
        a reference-slope feedforward with gain ``k_d`` covers half to all of
        the plant lag; gains and the time constant are drawn from ``seed``.
        """
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.standard_normal((n_dof, 4)))
        main, neg, pos, spare = q.T
        main_gain = rng.uniform(1.0, 2.0)
        tau = rng.uniform(0.3, 0.8)
        pair_gain = tau / k_d * rng.uniform(0.5, 1.0)
        e = main_gain * main - pair_gain * neg + pair_gain * pos + rng.uniform(-0.2, 0.2) * spare
        return cls(e, None, tau), main, neg, pos

    def initial_state(self, neutral=None):
        return YawState(0.0, 0.0)

    def output_of(self, state):
        return state.yaw_rate

    def _rate(self, omega, pose):
        return (-self.leak * omega + self.effectiveness @ (pose - self.neutral)) / self.time_constant

    def _step(self, omega, t, dt, pose_fn):
        p0, pm, p1 = pose_fn(t), pose_fn(t + 0.5 * dt), pose_fn(t + dt)
        k1 = self._rate(omega, p0)
        k2 = self._rate(omega + 0.5 * dt * k1, pm)
        k3 = self._rate(omega + 0.5 * dt * k2, pm)
        k4 = self._rate(omega + dt * k3, p1)
        return omega + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def advance_poses(self, state, t0, dt, n, pose_fn):
        omega = state.yaw_rate
        y = np.empty(n)
        for k in range(n):
            omega = self._step(omega, t0 + k * dt, dt, pose_fn)
            y[k] = omega
        return YawState(t0 + n * dt, omega), y

    def run(self, source, duration, dt, init):
        n = int(round(duration / dt))
        omega = init.yaw_rate
        t0 = init.time
        out = np.empty(n + 1)
        out[0] = omega
        for k in range(n):
            t = t0 + k * dt
            source.update(t, YawState(t, omega))
            omega = self._step(omega, t, dt, source.pose)
            if not math.isfinite(omega) or abs(omega) > 1e6:
                raise ClosedLoopUnstable(t + dt, omega)
            out[k + 1] = omega
        return YawTrace(t0 + dt * np.arange(n + 1), out)


# ---------------------------------------------------------------------------
# tracking


@dataclass(frozen=True)
class TrackingReport:
    delay_s: float
    rms_error: float
    saturation_fraction: float
    stable: bool

    def to_dict(self):
        return {"delay_s": self.delay_s, "rms_error": self.rms_error,
                "saturation_fraction": self.saturation_fraction, "stable": self.stable}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class TrackingResult:
    trajectory: object
    report: TrackingReport
    reference: np.ndarray
    alpha: np.ndarray  # (N, 2): limited main and pair signals per step


class _Loop:
    """Controller callback: state in, limited pose command out."""

    def __init__(self, controller, combination, limits, neutral, dt):
        self.controller = controller
        self.combination = combination
        self.limits = limits or NO_LIMITS
        self.neutral = neutral
        self.dt = dt
        self.alpha = [0.0, 0.0]
        self.saturated = 0
        self.steps = 0
        self.history = []

    def __call__(self, t, state):
        omega = state.yaw_rate
        if abs(omega) > INSTABILITY_RATE or not math.isfinite(omega):
            raise ClosedLoopUnstable(t, omega)
        cmd_main = self.controller.main_signal(t, omega)
        cmd_pair = self.controller.pair_signal(t) if isinstance(self.combination, Superposition) else 0.0
        a_main, s1 = self.limits.apply(self.alpha[0], cmd_main, self.dt)
        a_pair, s2 = self.limits.apply(self.alpha[1], cmd_pair, self.dt)
        self.alpha = [a_main, a_pair]
        self.steps += 1
        self.saturated += bool(s1 or s2)
        self.history.append((a_main, a_pair))
        return actuate(self.combination, a_main, a_pair, self.neutral)


def _check_compatible(controller, combination):
    if isinstance(combination, Superposition) and controller.k_d is None:
        raise ValueError("Superposition needs a feedforward-derivative gain k_d for the pattern pair")


def track(controller, combination, limits=None, plant=None, duration=20.0, dt=DEFAULT_DT, neutral=None,
          init=None, config=None):
    """Closed-loop run of ``controller`` through ``combination``.

    ``plant`` is a dynamics object (:class:`SurrogateYawPlant` or
    :class:`SkydiverDynamics`); a body config alone selects the simulator.
    """
    _check_compatible(controller, combination)
    if plant is None:
        if config is None:
            from .body import default_body_config

            config = default_body_config()
        plant = SkydiverDynamics(config)
    if neutral is None:
        from .body import standard_neutral_pose

        neutral = plant.neutral if isinstance(plant, SurrogateYawPlant) else standard_neutral_pose()
    neutral = np.asarray(neutral, dtype=float)
    if init is None:
        init = plant.initial_state(neutral)
    loop = _Loop(controller, combination, limits, neutral, dt)
    source = ControllerSource(loop, neutral, dt)
    traj = plant.run(source, duration, dt, init)
    yaw = np.asarray(traj.yaw_rate)
    bad = np.flatnonzero(~np.isfinite(yaw) | (np.abs(yaw) > INSTABILITY_RATE))
    if len(bad):
        raise ClosedLoopUnstable(float(traj.time[bad[0]]), float(yaw[bad[0]]))
    ref = np.array([controller.reference.value(t) for t in traj.time])
    delay = tracking_delay(ref, yaw, dt) if np.ptp(ref) > 0 else float("nan")
    rms = float(np.sqrt(np.mean((ref - yaw) ** 2)))
    report = TrackingReport(delay, rms, loop.saturated / max(loop.steps, 1), True)
    return TrackingResult(traj, report, ref, np.array(loop.history).reshape(-1, 2))


# ---------------------------------------------------------------------------
# synergy sweep


def _sweep_one(k, family, dynamics, neutral, amplitude, grid, cycles, kwargs):
    plant = PatternPlant(dynamics, PatternMap(neutral, family.positive_pattern(k)), neutral, name=f"synergy k={k:g}")
    return frequency_response(plant, amplitude, grid, cycles, workers=1, **kwargs)


def synergy_sweep(family, k_values, amplitude=1.0, dynamics=None, neutral=None, grid=None, cycles=10,
                  workers=None, **kwargs):
    """Frequency responses of the renormalised positive branch ``pos - k·pos_aux`` for each ``k``."""
    k_values = [float(k) for k in k_values]
    if any(k < 0 for k in k_values):
        raise ValueError("k values must be >= 0")
    if dynamics is None:
        from .body import default_body_config

        dynamics = SkydiverDynamics(default_body_config())
    if neutral is None:
        if isinstance(dynamics, SurrogateYawPlant):
            neutral = dynamics.neutral
        else:
            from .body import standard_neutral_pose

            neutral = standard_neutral_pose()
    grid = DEFAULT_GRID if grid is None else grid
    run = functools.partial(_sweep_one, family=family, dynamics=dynamics, neutral=np.asarray(neutral, float),
                            amplitude=amplitude, grid=grid, cycles=cycles, kwargs=kwargs)
    return ordered_map(run, k_values, workers)


# ---------------------------------------------------------------------------
# controller files


def _number(section, key, default, path, positive=False):
    if key not in section:
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValueError(f"{path}.{key}: expected a finite number")
    if positive and not v > 0:
        raise ValueError(f"{path}.{key}: must be > 0")
    return float(v)


def controller_from_dict(data):
    """Parse the controller-spec schema.

    ``{"controller": {"type": "P" | "P+FF" | "FF_derivative", "k_p", "k_ff", "k_d"},
    "reference": {"type": "sine", "amplitude", "frequency"} | {"type": "table", "times", "values"},
    "combination": {"type": "single" | "sign_switched" | "superposition" | "synergy", ...},
    "limits": {"max_angle", "max_rate"}}``.
    Returns ``(ControllerSpec, combination or None, ActuationLimits or None)``.
    """
    if not isinstance(data, dict) or not isinstance(data.get("controller"), dict):
        raise ValueError("controller: missing section")
    c = data["controller"]
    kind = c.get("type", "P")
    if kind not in ("P", "P+FF", "FF_derivative"):
        raise ValueError(f"controller.type: unknown controller {kind!r}")
    k_p = _number(c, "k_p", 2.5, "controller")
    k_ff = _number(c, "k_ff", 0.15 if kind != "P" else 0.0, "controller")
    k_d = _number(c, "k_d", 0.16, "controller") if kind == "FF_derivative" else None

    ref = data.get("reference", {"type": "sine"})
    rkind = ref.get("type", "sine")
    if rkind == "sine":
        reference = SineReference(_number(ref, "amplitude", 3.5, "reference"),
                                  _number(ref, "frequency", 0.2, "reference", positive=True))
    elif rkind == "step":
        reference = StepReference(_number(ref, "level", 1.0, "reference"), _number(ref, "start", 0.0, "reference"))
    elif rkind == "table":
        try:
            reference = TabulatedReference(ref["times"], ref["values"])
        except KeyError as exc:
            raise ValueError(f"reference.{exc.args[0]}: required for a table reference") from None
    else:
        raise ValueError(f"reference.type: unknown reference {rkind!r}")
    spec = ControllerSpec(k_p, k_ff, k_d, reference)

    limits = None
    if "limits" in data:
        lim = data["limits"]
        limits = ActuationLimits(_number(lim, "max_angle", 1.5, "limits", positive=True),
                                 _number(lim, "max_rate", 3.5, "limits", positive=True))

    combination = None
    if "combination" in data:
        combination = _combination_from_dict(data["combination"])
        _check_compatible(spec, combination)
    return spec, combination, limits


def _vector(comb, key):
    if key not in comb:
        raise ValueError(f"combination.{key}: required")
    v = np.asarray(comb[key], dtype=float)
    if v.ndim != 1:
        raise ValueError(f"combination.{key}: expected a vector")
    return v


def _combination_from_dict(comb):
    kind = comb.get("type")
    try:
        if kind == "single":
            return Single(_vector(comb, "pattern"))
        if kind == "sign_switched":
            return SignSwitched(_vector(comb, "neg"), _vector(comb, "pos"))
        if kind == "superposition":
            return Superposition(_vector(comb, "main"), _vector(comb, "neg"), _vector(comb, "pos"))
        if kind == "synergy":
            return SynergyFamily(_vector(comb, "neg"), _vector(comb, "neg_aux"), _vector(comb, "pos"),
                                 _vector(comb, "pos_aux"), float(comb.get("k", 0.0)))
    except ValueError as exc:
        raise ValueError(f"combination: {exc}") from None
    raise ValueError(f"combination.type: unknown combination {kind!r}")


def combination_from_components(comb, dec):
    """Resolve ``{"type": ..., "neg": 2, ...}`` entries given as 1-based component indices."""
    out = dict(comb)
    for key in ("pattern", "main", "neg", "pos", "neg_aux", "pos_aux"):
        if isinstance(out.get(key), int):
            out[key] = dec.component(out[key]).tolist()
    return out


def load_controller_spec(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None
    return controller_from_dict(data)


DEFAULT_CONTROLLER_FILE = {
    "controller": {"type": "FF_derivative", "k_p": 2.5, "k_ff": 0.15, "k_d": 0.16},
    "reference": {"type": "sine", "amplitude": 3.5, "frequency": 0.2},
    "limits": {"max_angle": 1.5, "max_rate": 3.5},
}
