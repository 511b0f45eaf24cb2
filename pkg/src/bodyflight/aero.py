"""Segment-wise flat-plate aerodynamics.

Each segment is treated as a plate with normal ``n`` (its thickness axis),
long axis ``e1`` and width axis ``e2``. For a segment moving through still
air with velocity ``v`` (``v̂ = v/|v|``, ``s = v̂·n`` the sine of the
incidence against the plate):

* exposed area ``A = A_flat|v̂·n| + A_end|v̂·e1| + A_side|v̂·e2|``
* drag  ``-q A c_drag_max s² v̂``
* lift  ``-q A c_lift_max s (n - s v̂)`` (perpendicular to ``v``, in the plane of ``v`` and ``n``)
* pitching moment ``q A ℓ c_moment_max s (n × v̂)``, turning the plate broadside

with ``q = ½ρ|v|²``. For zero sideslip this is the usual
``C_D = c·sin²α``, ``C_L = c·sin α cos α`` flat-plate closure. Segments
slower than :data:`NO_FLOW_SPEED` produce no force (hard cut-off; the jump
is bounded by the wrench at the threshold).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .rotations import cross

NO_FLOW_SPEED = 0.1
SCALE_HEIGHT_M = 8500.0

# multipliers on the default drag coefficient, keyed by gear label
GEAR_DRAG_FACTORS = {
    "jumpsuit": {"standard": 1.0, "tight": 0.92, "baggy": 1.12},
    "helmet": {"open": 1.0, "full-face": 0.99},
    "weight_belt": {"none": 1.0, "light": 1.0, "heavy": 1.0},
}

# fitted with calibrate_drag() so the standard neutral pose falls at 60 m/s
DEFAULT_C_DRAG_MAX = 0.6829301399422908


@dataclass(frozen=True)
class AeroConfig:
    c_lift_max: float = 0.5 * DEFAULT_C_DRAG_MAX
    c_drag_max: float = DEFAULT_C_DRAG_MAX
    c_moment_max: float = 0.15
    c_damp_roll: float = 0.25
    c_damp_pitch: float = 0.25
    c_damp_yaw: float = 0.10
    air_density: float = 1.0
    altitude_density: bool = False
    reference_altitude_m: float = 4000.0
    area_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        coeffs = (self.c_lift_max, self.c_drag_max, self.c_moment_max,
                  self.c_damp_roll, self.c_damp_pitch, self.c_damp_yaw)
        if not all(np.isfinite(c) and c >= 0 for c in coeffs):
            raise ValueError("aerodynamic coefficients must be finite and >= 0")
        if not self.air_density > 0:
            raise ValueError("air_density must be > 0")

    @classmethod
    def from_dict(cls, data, gear=None):
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown aero fields {sorted(unknown)}")
        if "c_drag_max" not in data and gear:
            factor = 1.0
            for key, label in gear.items():
                factor *= GEAR_DRAG_FACTORS.get(key, {}).get(label, 1.0)
            data["c_drag_max"] = DEFAULT_C_DRAG_MAX * factor
        if "area_overrides" in data:
            data["area_overrides"] = {k: tuple(float(a) for a in v) for k, v in data["area_overrides"].items()}
        return cls(**data)

    def to_dict(self):
        d = asdict(self)
        d["area_overrides"] = {k: list(v) for k, v in self.area_overrides.items()}
        return d

    def density(self, altitude_m=None):
        if not self.altitude_density or altitude_m is None:
            return self.air_density
        return self.air_density * np.exp(-(altitude_m - self.reference_altitude_m) / SCALE_HEIGHT_M)


@dataclass(frozen=True)
class FlowAngles:
    alpha: float
    beta: float
    gamma: float


@dataclass(frozen=True)
class AeroWrench:
    force: np.ndarray
    moment: np.ndarray

    def __add__(self, other):
        return AeroWrench(self.force + other.force, self.moment + other.moment)


def flow_angles(segment_velocity):
    """Angles of attack, sideslip and roll for a velocity in segment axes ``(e1, e2, n)``.

    ``alpha = atan2(v_n, v_1)`` is measured from the long axis towards the
    plate normal, ``beta = atan2(v_2, hypot(v_1, v_n))`` and
    ``gamma = atan2(v_2, v_n)`` is the roll of the cross-flow about the long
    axis. Returns None (no flow) below :data:`NO_FLOW_SPEED`.
    """
    u, v, w = np.asarray(segment_velocity, dtype=float)
    if np.sqrt(u * u + v * v + w * w) <= NO_FLOW_SPEED:
        return None
    return FlowAngles(
        alpha=float(np.arctan2(w, u)),
        beta=float(np.arctan2(v, np.hypot(u, w))),
        gamma=float(np.arctan2(v, w)),
    )


def plate_forces(normal, e1, e2, areas, length, velocity, aero, density=None):
    """Vectorised force and pitching moment for ``k`` plates.

    All vector arguments are ``(k, 3)`` in a common frame; ``areas`` is
    ``(k, 3)`` holding (flat, end, side). Returns ``(force, moment)`` with the
    moment about each plate's own centre.
    """
    rho = aero.air_density if density is None else density
    speed = np.sqrt(np.einsum("ki,ki->k", velocity, velocity))
    flowing = speed > NO_FLOW_SPEED
    safe = np.where(flowing, speed, 1.0)
    vh = velocity / safe[:, None]
    sn = np.einsum("ki,ki->k", vh, normal)
    s1 = np.einsum("ki,ki->k", vh, e1)
    s2 = np.einsum("ki,ki->k", vh, e2)
    exposed = areas[:, 0] * np.abs(sn) + areas[:, 1] * np.abs(s1) + areas[:, 2] * np.abs(s2)
    qa = np.where(flowing, 0.5 * rho * speed * speed * exposed, 0.0)
    drag = -(qa * aero.c_drag_max * sn * sn)[:, None] * vh
    lift = -(qa * aero.c_lift_max * sn)[:, None] * (normal - sn[:, None] * vh)
    pitch = (qa * length * aero.c_moment_max * sn)[:, None] * cross(normal, vh)
    return drag + lift, pitch


def segment_wrench(seg, rotation, position, velocity, aero, axes=None, density=None):
    """Wrench of one segment in body coordinates.

    ``rotation`` maps segment axes into the body frame and ``position`` is the
    segment centre relative to the moment reference point (the cog).
    ``velocity`` is the segment's airspeed vector in body coordinates.
    ``axes`` holds the plate axes ``(e1, e2, n)`` as columns in the segment
    frame; identity by default.
    """
    from .body import _shape_properties

    axes = np.eye(3) if axes is None else np.asarray(axes, dtype=float)
    world = np.asarray(rotation, dtype=float) @ axes
    _, areas, length = _shape_properties(seg, 1.0)
    areas = aero.area_overrides.get(seg.name, areas)
    force, pitch = plate_forces(
        world[None, :, 2], world[None, :, 0], world[None, :, 1],
        np.asarray(areas, dtype=float)[None, :], np.array([length]),
        np.asarray(velocity, dtype=float)[None, :], aero, density,
    )
    moment = cross(np.asarray(position, dtype=float), force[0]) + pitch[0]
    return AeroWrench(force[0], moment)


def damping_moment(geometry, aero, speed, omega, density=None):
    """``-c·½ρ|v|·S_ref·L_ref·ω`` per body axis (roll, pitch, yaw)."""
    rho = aero.air_density if density is None else density
    s_ref = float(np.sum(geometry.areas[:, 0]))
    l_ref = float(geometry.height)
    c = np.array([aero.c_damp_roll, aero.c_damp_pitch, aero.c_damp_yaw])
    return -0.5 * rho * speed * s_ref * l_ref * c * np.asarray(omega, dtype=float)


def wrench_from_geometry(geometry, aero, v_body, omega_body, density=None):
    v_body = np.asarray(v_body, dtype=float)
    omega_body = np.asarray(omega_body, dtype=float)
    r = geometry.r_cog
    velocity = v_body + cross(omega_body, r)
    force, pitch = plate_forces(
        geometry.normal, geometry.e1, geometry.e2, geometry.areas, geometry.length, velocity, aero, density
    )
    # fixed segment order keeps the sums bitwise reproducible
    total_force = force.sum(axis=0)
    moment = (cross(r, force) + pitch).sum(axis=0)
    speed = float(np.sqrt(v_body @ v_body))
    moment = moment + damping_moment(geometry, aero, speed, omega_body, density)
    return AeroWrench(total_force, moment)


def total_wrench(config, pose, v_body, omega_body, density=None):
    """Sum of segment wrenches plus rate damping, moment about the current cog."""
    from .body import body_geometry

    geo = body_geometry(config, pose)
    return wrench_from_geometry(geo, config.aero, v_body, omega_body, density)
