"""6-DOF Newton-Euler free-fall simulation driven by a pose source.

State is the cog position and velocity in a Z-down inertial frame, the
body-to-inertial quaternion and the body-frame angular velocity. The body
is a single rigid body whose inertia, cog and aerodynamic geometry follow
the instantaneous pose::

    m dv/dt = m g + R F_aero
    I dω/dt = M_aero - ω × (I ω) - (dI/dt) ω
    dq/dt   = ½ q ⊗ (0, ω)

Integration is fixed-step RK4; the pose is sampled at every RK4 stage time.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq, least_squares

from .aero import wrench_from_geometry
from .body import RATE_STEP, body_geometry, is_symmetric_pose, standard_neutral_pose
from .rotations import quat_to_matrix

GRAVITY = 9.81
DEFAULT_DT = 1.0 / 240.0
MAX_DT = 1.0 / 60.0
TERMINAL_SPEED = 60.0
DEFAULT_ALTITUDE = 4000.0
DIVERGENCE_LIMIT = 1e6

TRAJECTORY_COLUMNS = ("t_s", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz", "yaw_rate")


class SimulationDivergence(RuntimeError):
    def __init__(self, time, message):
        super().__init__(f"simulation diverged at t={time:.6f} s: {message}")
        self.time = time


class PoseClampWarning(UserWarning):
    """A composed pose had angles beyond ±π and was clamped."""


def clamp_pose(pose):
    pose = np.asarray(pose, dtype=float)
    if np.any(np.abs(pose) > np.pi):
        warnings.warn("pose angles beyond ±pi were clamped", PoseClampWarning, stacklevel=3)
        return np.clip(pose, -np.pi, np.pi)
    return pose


@dataclass(frozen=True)
class SimState:
    time: float
    position: np.ndarray
    velocity: np.ndarray
    orientation: np.ndarray
    omega: np.ndarray

    def as_vector(self):
        return np.concatenate([self.position, self.velocity, self.orientation, self.omega])

    @classmethod
    def from_vector(cls, time, x):
        x = np.asarray(x, dtype=float)
        return cls(float(time), x[0:3].copy(), x[3:6].copy(), x[6:10].copy(), x[10:13].copy())

    @property
    def rotation(self):
        return quat_to_matrix(self.orientation)

    @property
    def yaw_rate(self):
        """Turn rate about the inertial vertical."""
        return float(self.rotation[2] @ self.omega)


def initial_state(speed=TERMINAL_SPEED, altitude=DEFAULT_ALTITUDE):
    """Belly-to-earth at rest in attitude, falling vertically at ``speed``."""
    return SimState(
        0.0,
        np.array([0.0, 0.0, -altitude]),
        np.array([0.0, 0.0, speed]),
        np.array([1.0, 0.0, 0.0, 0.0]),
        np.zeros(3),
    )


# ---------------------------------------------------------------------------
# pose sources


class PoseSource:
    """Time-varying pose. Subclasses implement :meth:`pose`."""

    static = False

    def pose(self, t):
        raise NotImplementedError

    def rate(self, t):
        h = RATE_STEP
        return (self.pose(t + 0.5 * h) - self.pose(t - 0.5 * h)) / h

    def update(self, t, state):
        """Hook called with the current state before every integration step."""

    def mirrored(self):
        from .body import mirror_pose

        return FunctionSource(lambda t: mirror_pose(self.pose(t)))


class ConstantPose(PoseSource):
    static = True

    def __init__(self, pose):
        self._pose = clamp_pose(pose)

    def pose(self, t):
        return self._pose

    def rate(self, t):
        return np.zeros_like(self._pose)


class FunctionSource(PoseSource):
    def __init__(self, fn):
        self._fn = fn

    def pose(self, t):
        return self._fn(t)


class Recorded(PoseSource):
    """Linearly interpolated recorded poses (a :class:`MotionDataset`)."""

    def __init__(self, dataset):
        self.dataset = dataset
        self._t = np.asarray(dataset.times, dtype=float)
        self._p = np.asarray(dataset.poses, dtype=float)
        self._t0 = float(self._t[0])
        self._step = 1.0 / dataset.sample_rate

    @property
    def duration(self):
        return self.dataset.duration

    def _locate(self, t):
        x = (t - self._t0) / self._step
        k = int(np.floor(x))
        k = min(max(k, 0), len(self._t) - 2)
        return k, x - k

    def pose(self, t):
        if len(self._t) == 1:
            return self._p[0]
        k, w = self._locate(t)
        w = min(max(w, 0.0), 1.0)
        if w == 0.0:
            return self._p[k]
        return (1.0 - w) * self._p[k] + w * self._p[k + 1]

    def rate(self, t):
        if len(self._t) == 1:
            return np.zeros(self._p.shape[1])
        return super().rate(t)


class SinePattern(PoseSource):
    """``neutral + A sin(2π f t + phase) · component``."""

    def __init__(self, neutral, component, amplitude=1.0, frequency=1.0, phase=0.0):
        if not amplitude > 0:
            raise ValueError("amplitude must be > 0")
        self.neutral = np.asarray(neutral, dtype=float)
        self.component = np.asarray(component, dtype=float)
        self.amplitude = float(amplitude)
        self.frequency = float(frequency)
        self.phase = float(phase)

    @classmethod
    def from_decomposition(cls, dec, index, amplitude=1.0, frequency=1.0):
        return cls(dec.neutral_pose, dec.component(index), amplitude, frequency)

    def signal(self, t):
        return self.amplitude * np.sin(2 * np.pi * self.frequency * t + self.phase)

    def pose(self, t):
        return clamp_pose(self.neutral + self.signal(t) * self.component)

    def rate(self, t):
        w = 2 * np.pi * self.frequency
        return self.amplitude * w * np.cos(w * t + self.phase) * self.component


class StepPattern(ConstantPose):
    """``neutral + A · component`` held constant."""

    def __init__(self, neutral, component, amplitude=1.0):
        if not amplitude > 0:
            raise ValueError("amplitude must be > 0")
        super().__init__(np.asarray(neutral, float) + amplitude * np.asarray(component, float))


class SignalPattern(PoseSource):
    """``neutral + Σ α_i(t) · component_i`` for arbitrary signal callables."""

    def __init__(self, neutral, components, signals):
        self.neutral = np.asarray(neutral, dtype=float)
        self.components = np.atleast_2d(np.asarray(components, dtype=float))
        self.signals = list(signals)

    def pose(self, t):
        alpha = np.array([s(t) for s in self.signals])
        return clamp_pose(self.neutral + alpha @ self.components)


class ControllerSource(PoseSource):
    """Pose computed from the state by ``callback(t, state)`` once per step.

    The pose ramps linearly from the previous command to the new one over
    the step, which is a one-sample computational delay.
    """

    def __init__(self, callback, initial_pose, dt):
        self.callback = callback
        self.dt = float(dt)
        self._prev = np.asarray(initial_pose, dtype=float)
        self._next = self._prev
        self._t0 = 0.0

    def update(self, t, state):
        self._prev = self._next
        self._next = np.asarray(self.callback(t, state), dtype=float)
        self._t0 = t

    def pose(self, t):
        w = min(max((t - self._t0) / self.dt, 0.0), 1.0)
        return self._prev + w * (self._next - self._prev)

    def rate(self, t):
        return (self._next - self._prev) / self.dt


# ---------------------------------------------------------------------------
# integration


class _PoseTrack:
    """Memoises pose geometry on the half-step time grid used by RK4 and the rate stencil."""

    def __init__(self, config, source, dt):
        self.config = config
        self.source = source
        self.half = 0.5 * RATE_STEP
        self._memo = {}
        self._static = None
        if source.static:
            geo = body_geometry(config, source.pose(0.0))
            self._static = (geo, np.zeros((3, 3)))

    def reset(self):
        self._memo.clear()

    def _geometry(self, t):
        x = t / self.half
        key = round(x)
        if abs(x - key) < 1e-7:
            geo = self._memo.get(key)
            if geo is None:
                geo = body_geometry(self.config, self.source.pose(key * self.half))
                if len(self._memo) > 16:
                    self._memo.pop(next(iter(self._memo)))
                self._memo[key] = geo
            return geo
        return body_geometry(self.config, self.source.pose(t))

    def at(self, t):
        if self._static is not None:
            return self._static
        geo = self._geometry(t)
        rate = self.source.rate(t)
        if not np.any(rate):
            return geo, np.zeros((3, 3))
        hi = self._geometry(t + self.half)
        lo = self._geometry(t - self.half)
        return geo, (hi.inertia - lo.inertia) / RATE_STEP


def _quat_matrix(w, x, y, z):
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _derivative(x, t, track, aero, gravity):
    geo, inertia_rate = track.at(t)
    qw, qx, qy, qz = x[6:10].tolist()
    w = x[10:13]
    p, q, r = w.tolist()
    rot = _quat_matrix(qw, qx, qy, qz)
    density = aero.density(-x[2]) if aero.altitude_density else None
    wrench = wrench_from_geometry(geo, aero, x[3:6] @ rot, w, density)
    out = np.empty(13)
    out[0:3] = x[3:6]
    out[3:6] = gravity + rot @ wrench.force / geo.total_mass
    out[6:10] = (
        0.5 * (-qx * p - qy * q - qz * r),
        0.5 * (qw * p + qy * r - qz * q),
        0.5 * (qw * q - qx * r + qz * p),
        0.5 * (qw * r + qx * q - qy * p),
    )
    h = geo.inertia @ w
    gyro = (q * h[2] - r * h[1], r * h[0] - p * h[2], p * h[1] - q * h[0])
    out[10:13] = geo.inertia_inv @ (wrench.moment - gyro - inertia_rate @ w)
    return out


def _rk4(x, t, dt, track, aero, gravity):
    k1 = _derivative(x, t, track, aero, gravity)
    k2 = _derivative(x + 0.5 * dt * k1, t + 0.5 * dt, track, aero, gravity)
    k3 = _derivative(x + 0.5 * dt * k2, t + 0.5 * dt, track, aero, gravity)
    k4 = _derivative(x + dt * k3, t + dt, track, aero, gravity)
    out = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    out[6:10] /= np.linalg.norm(out[6:10])
    return out


def _check(x, t):
    if not np.all(np.isfinite(x)):
        raise SimulationDivergence(t, "non-finite state")
    if np.max(np.abs(x)) > DIVERGENCE_LIMIT:
        raise SimulationDivergence(t, f"state component exceeds {DIVERGENCE_LIMIT:g}")


def _gravity_vector():
    return np.array([0.0, 0.0, GRAVITY])


def step(state, pose, config, dt=DEFAULT_DT, pose_rate=None):
    """Advance ``state`` by one RK4 step.

    ``pose`` is either a pose array, held (or ramped along ``pose_rate``)
    through the step, or a :class:`PoseSource`.
    """
    if not 0 < dt <= MAX_DT + 1e-15:
        raise ValueError(f"dt must lie in (0, {MAX_DT}] s")
    if isinstance(pose, PoseSource):
        source = pose
    elif pose_rate is None or not np.any(pose_rate):
        source = ConstantPose(pose)
    else:
        p0 = np.asarray(pose, float)
        r0 = np.asarray(pose_rate, float)
        t0 = state.time
        source = FunctionSource(lambda t: p0 + r0 * (t - t0))
    track = _PoseTrack(config, source, dt)
    x = _rk4(state.as_vector(), state.time, dt, track, config.aero, _gravity_vector())
    _check(x, state.time + dt)
    return SimState.from_vector(state.time + dt, x)


@dataclass(frozen=True)
class Trajectory:
    time: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    orientation: np.ndarray
    omega: np.ndarray
    poses: np.ndarray | None = None

    def __len__(self):
        return len(self.time)

    @property
    def dt(self):
        return float(self.time[1] - self.time[0])

    @property
    def yaw_rate(self):
        """Inertial-Z component of the angular velocity, rad/s."""
        rot = quat_to_matrix(self.orientation)
        return np.einsum("nj,nj->n", rot[:, 2, :], self.omega)

    @property
    def horizontal_position(self):
        return self.position[:, :2]

    @property
    def vertical_speed(self):
        return self.velocity[:, 2]

    def state(self, k):
        return SimState(float(self.time[k]), self.position[k], self.velocity[k], self.orientation[k], self.omega[k])

    def channels(self):
        """All CSV channels as one ``(N, 15)`` array."""
        return np.column_stack([self.time, self.position, self.velocity, self.orientation, self.omega, self.yaw_rate])

    def mirrored(self):
        """Left-right mirror image (lateral axis flipped)."""
        flip = np.array([1.0, -1.0, 1.0])
        return replace(
            self,
            position=self.position * flip,
            velocity=self.velocity * flip,
            orientation=self.orientation * np.array([1.0, -1.0, 1.0, -1.0]),
            omega=self.omega * np.array([-1.0, 1.0, -1.0]),
        )

    def to_csv(self, path, include_pose=False):
        from .body import POSE_COLUMNS

        header = list(TRAJECTORY_COLUMNS)
        data = self.channels()
        if include_pose and self.poses is not None:
            header += list(POSE_COLUMNS)
            data = np.column_stack([data, self.poses])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in data:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        if tuple(header[:15]) != TRAJECTORY_COLUMNS:
            raise ValueError(f"{path}: not a trajectory CSV")
        poses = body[:, 15:] if body.shape[1] > 15 else None
        return cls(body[:, 0], body[:, 1:4], body[:, 4:7], body[:, 7:11], body[:, 11:14], poses)


def simulate(source, duration, dt=DEFAULT_DT, init=None, config=None, record_poses=True):
    """Integrate from ``init`` for ``duration`` seconds; deterministic for equal inputs."""
    from .body import default_body_config

    config = config or default_body_config()
    if not 0 < dt <= MAX_DT + 1e-15:
        raise ValueError(f"dt must lie in (0, {MAX_DT}] s")
    n = int(round(duration / dt))
    if n < 1 or abs(n * dt - duration) > 1e-9 * max(1.0, duration):
        raise ValueError("duration must be a positive multiple of dt")
    if isinstance(source, Recorded) and source.duration + 1e-9 < duration:
        raise ValueError(f"recorded dataset covers {source.duration:.3f} s < requested {duration} s")
    init = init or initial_state()
    track = _PoseTrack(config, source, dt)
    gravity = _gravity_vector()
    aero = config.aero
    t0 = init.time
    out = np.empty((n + 1, 13))
    out[0] = init.as_vector()
    poses = np.empty((n + 1, config.n_dof)) if record_poses else None
    x = out[0].copy()
    for k in range(n):
        t = t0 + k * dt
        source.update(t, SimState.from_vector(t, x))
        if record_poses:
            poses[k] = source.pose(t)
        x = _rk4(x, t, dt, track, aero, gravity)
        _check(x, t + dt)
        out[k + 1] = x
    if record_poses:
        poses[n] = source.pose(t0 + n * dt)
    times = t0 + dt * np.arange(n + 1)
    return Trajectory(times, out[:, 0:3], out[:, 3:6], out[:, 6:10], out[:, 10:13], poses)


# ---------------------------------------------------------------------------
# trim and calibration


def _euler_quat(roll, pitch, yaw=0.0):
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def trim_state(config, pose=None, altitude=DEFAULT_ALTITUDE, guess_speed=TERMINAL_SPEED):
    """Steady non-rotating equilibrium for a constant pose.

    Solves roll, pitch and the inertial velocity so that aerodynamic force
    balances gravity and the roll/pitch moments vanish. Symmetric poses keep
    roll and lateral velocity exactly zero. A residual yaw moment (from an
    asymmetric pose) is left unbalanced.
    """
    pose = standard_neutral_pose() if pose is None else np.asarray(pose, dtype=float)
    geo = body_geometry(config, pose)
    mg = geo.total_mass * GRAVITY
    aero = config.aero
    gravity = _gravity_vector() * geo.total_mass
    symmetric = len(pose) == 45 and is_symmetric_pose(pose)

    def residual(roll, pitch, vel):
        q = _euler_quat(roll, pitch)
        rot = quat_to_matrix(q)
        w = wrench_from_geometry(geo, aero, rot.T @ vel, np.zeros(3))
        f = (gravity + rot @ w.force) / mg
        m = w.moment[:2] / mg
        return f, m

    if symmetric:
        def fun(x):
            f, m = residual(0.0, x[0], np.array([x[1], 0.0, x[2]]))
            return np.array([f[0], f[2], m[1]])

        sol = least_squares(fun, [0.0, 0.0, guess_speed], xtol=1e-15, ftol=1e-15, gtol=1e-15)
        roll, pitch, vel = 0.0, sol.x[0], np.array([sol.x[1], 0.0, sol.x[2]])
    else:
        def fun(x):
            f, m = residual(x[0], x[1], x[2:5])
            return np.concatenate([f, m])

        sol = least_squares(fun, [0.0, 0.0, 0.0, 0.0, guess_speed], xtol=1e-15, ftol=1e-15, gtol=1e-15)
        roll, pitch, vel = sol.x[0], sol.x[1], sol.x[2:5]
    if np.max(np.abs(sol.fun)) > 1e-6:
        warnings.warn(f"trim residual {np.max(np.abs(sol.fun)):.2e} is not small", RuntimeWarning, stacklevel=2)
    return SimState(0.0, np.array([0.0, 0.0, -altitude]), vel, _euler_quat(roll, pitch), np.zeros(3))


def terminal_speed(config, pose=None):
    """Vertical speed of the trimmed equilibrium."""
    return float(trim_state(config, pose).velocity[2])


def calibrate_drag(config, pose=None, target=TERMINAL_SPEED, bracket=(0.05, 5.0)):
    """Fit ``c_drag_max`` so the trimmed vertical speed of ``pose`` equals ``target``.

    Returns ``(config_with_fit, c_drag_max)``. ``c_lift_max`` keeps its ratio
    to ``c_drag_max``.
    """
    from .body import with_aero

    ratio = config.aero.c_lift_max / config.aero.c_drag_max if config.aero.c_drag_max > 0 else 0.5

    def mismatch(c):
        cfg = with_aero(config, c_drag_max=c, c_lift_max=ratio * c)
        return terminal_speed(cfg, pose) - target

    c = brentq(mismatch, *bracket, xtol=1e-14, rtol=1e-13)
    return with_aero(config, c_drag_max=c, c_lift_max=ratio * c), c
