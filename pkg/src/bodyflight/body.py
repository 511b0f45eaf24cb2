"""Articulated skydiver body: configuration, poses and mass properties.

The body is a tree of rigid segments rooted at the pelvis. Every joint has
three Euler angles ``(psi, theta, phi)`` applied as ``Rz @ Ry @ Rx`` in the
parent segment frame. The body frame is pelvis-fixed with ``x`` towards the
head, ``y`` to the right and ``z`` out of the belly, so an identity
orientation in the Z-down inertial frame is a belly-to-earth attitude.

At the all-zero pose every segment frame is parallel to the body frame:
torso and head along ``+x``, arms spread along ``±y``, legs along ``-x``.
"""

from __future__ import annotations

import copy
import json
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .aero import AeroConfig
from .rotations import (
    euler_zyx_to_matrix,
    matrix_to_euler_zyx,
    matrix_to_quat,
    quat_normalize,
    quat_to_matrix,
)

SEGMENT_NAMES = (
    "pelvis", "abdomen", "thorax", "head",
    "upper_arm_l", "upper_arm_r", "forearm_l", "forearm_r", "hand_l", "hand_r",
    "upper_leg_l", "upper_leg_r", "lower_leg_l", "lower_leg_r", "foot_l", "foot_r",
)
JOINT_NAMES = (
    "lumbar", "thorax", "neck",
    "shoulder_l", "shoulder_r", "elbow_l", "elbow_r", "wrist_l", "wrist_r",
    "hip_l", "hip_r", "knee_l", "knee_r", "ankle_l", "ankle_r",
)
EULER_NAMES = ("psi", "theta", "phi")
POSE_COLUMNS = tuple(f"{j}_{a}_rad" for j in JOINT_NAMES for a in EULER_NAMES)
N_DOF = 3 * len(JOINT_NAMES)
SHAPES = ("cylinder", "elliptic_cylinder", "ellipsoid", "box")

# central-difference step used for cog/inertia rates (the 240 Hz data rate)
RATE_STEP = 1.0 / 240.0

# joint -> (psi, theta, phi) in rad; a belly-to-earth box position
STANDARD_NEUTRAL = {
    # lumbar and knee pitch are solved so the pose is a force and pitch-moment
    # equilibrium when falling belly-to-earth
    "lumbar": (0.0, 0.041995411519036484, 0.0),
    "thorax": (0.0, 0.05, 0.0),
    "neck": (0.0, 0.40, 0.0),
    "shoulder_l": (-0.05, 0.0, 0.45),
    "shoulder_r": (0.05, 0.0, -0.45),
    "elbow_l": (1.40, 0.0, 0.0),
    "elbow_r": (-1.40, 0.0, 0.0),
    "wrist_l": (0.0, 0.0, 0.0),
    "wrist_r": (0.0, 0.0, 0.0),
    "hip_l": (0.28, 0.10, 0.0),
    "hip_r": (-0.28, 0.10, 0.0),
    "knee_l": (0.0, -0.5208370130302914, 0.0),
    "knee_r": (0.0, -0.5208370130302914, 0.0),
    "ankle_l": (0.0, 0.0, 0.0),
    "ankle_r": (0.0, 0.0, 0.0),
}


class ConfigError(ValueError):
    """A body configuration file is malformed or violates an invariant."""


@dataclass(frozen=True)
class SegmentSpec:
    name: str
    shape: str
    dims_m: tuple
    mass_fraction: float


@dataclass(frozen=True)
class JointSpec:
    name: str
    parent: str
    child: str
    offset_parent_m: tuple
    offset_child_m: tuple


@dataclass(frozen=True)
class MassProperties:
    cog: np.ndarray
    inertia: np.ndarray
    cog_rate: np.ndarray
    inertia_rate: np.ndarray


@dataclass(frozen=True, eq=False)
class BodyConfig:
    """Segment geometry, joint tree and aerodynamic parameters of one skydiver.

    Build it with :func:`load_body_config` or :meth:`from_dict`; both run
    :meth:`validate`. Pass ``strict=False`` to ``from_dict`` for toy bodies
    that do not have the 16-segment layout.
    """

    segments: tuple
    joints: tuple
    total_mass: float
    height: float
    aero: AeroConfig
    gear: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_dof(self):
        return 3 * len(self.joints)

    @classmethod
    def from_dict(cls, data, strict=True):
        try:
            segments = tuple(
                SegmentSpec(
                    name=str(s["name"]),
                    shape=str(s["shape"]),
                    dims_m=tuple(float(d) for d in s["dims_m"]),
                    mass_fraction=float(s["mass_fraction"]),
                )
                for s in data["segments"]
            )
            joints = tuple(
                JointSpec(
                    name=str(j["name"]),
                    parent=str(j["parent"]),
                    child=str(j["child"]),
                    offset_parent_m=tuple(float(v) for v in j["offset_parent_m"]),
                    offset_child_m=tuple(float(v) for v in j["offset_child_m"]),
                )
                for j in data["joints"]
            )
            gear = dict(data.get("gear", {}))
            aero = AeroConfig.from_dict(data.get("aero", {}), gear=gear)
            cfg = cls(
                segments=segments,
                joints=joints,
                total_mass=float(data["total_mass_kg"]),
                height=float(data["height_m"]),
                aero=aero,
                gear=gear,
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed body config: missing or invalid field {exc}") from exc
        cfg.validate(strict=strict)
        return cfg

    def to_dict(self):
        return {
            "segments": [
                {"name": s.name, "shape": s.shape, "dims_m": list(s.dims_m), "mass_fraction": s.mass_fraction}
                for s in self.segments
            ],
            "joints": [
                {
                    "name": j.name,
                    "parent": j.parent,
                    "child": j.child,
                    "offset_parent_m": list(j.offset_parent_m),
                    "offset_child_m": list(j.offset_child_m),
                }
                for j in self.joints
            ],
            "total_mass_kg": self.total_mass,
            "height_m": self.height,
            "aero": self.aero.to_dict(),
            "gear": dict(self.gear),
        }

    def validate(self, strict=True):
        names = [s.name for s in self.segments]
        if strict:
            if len(self.segments) != len(SEGMENT_NAMES):
                raise ConfigError(f"expected {len(SEGMENT_NAMES)} segments, got {len(self.segments)}")
            if len(self.joints) != len(JOINT_NAMES):
                raise ConfigError(f"expected {len(JOINT_NAMES)} joints, got {len(self.joints)}")
            if set(names) != set(SEGMENT_NAMES):
                raise ConfigError(f"segment names must be {sorted(SEGMENT_NAMES)}")
            if tuple(j.name for j in self.joints) != JOINT_NAMES:
                raise ConfigError(f"joints must be listed in order {list(JOINT_NAMES)}")
        if len(set(names)) != len(names):
            raise ConfigError("duplicate segment names")
        for s in self.segments:
            if s.shape not in SHAPES:
                raise ConfigError(f"segment {s.name}: unknown shape {s.shape!r}")
            expected = 2 if s.shape == "cylinder" else 3
            if len(s.dims_m) != expected:
                raise ConfigError(f"segment {s.name}: shape {s.shape} needs {expected} dims")
            if not all(d > 0 for d in s.dims_m):
                raise ConfigError(f"segment {s.name}: dimensions must be > 0")
            if not s.mass_fraction > 0:
                raise ConfigError(f"segment {s.name}: mass fraction must be > 0")
        total = sum(s.mass_fraction for s in self.segments)
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"segment mass fractions sum to {total!r}, expected 1")
        if not (self.total_mass > 0 and self.height > 0):
            raise ConfigError("total_mass_kg and height_m must be > 0")

        # tree check: root is the first segment, every other segment has one parent joint
        root = self.segments[0].name
        if strict and root != "pelvis":
            raise ConfigError("tree must be rooted at pelvis (first segment)")
        children = [j.child for j in self.joints]
        if len(self.joints) != len(self.segments) - 1:
            raise ConfigError("joint count must be segment count - 1")
        if root in children or sorted(children) != sorted(names[1:]):
            raise ConfigError("each non-root segment needs exactly one parent joint")
        placed = {root}
        for j in self.joints:
            if j.parent not in placed:
                raise ConfigError(f"joint {j.name}: parent {j.parent} not placed before it")
            if len(j.offset_parent_m) != 3 or len(j.offset_child_m) != 3:
                raise ConfigError(f"joint {j.name}: offsets must be 3-vectors")
            placed.add(j.child)

        if strict:
            self._validate_symmetry()

    def _validate_symmetry(self):
        segs = {s.name: s for s in self.segments}
        for name, s in segs.items():
            if name.endswith("_l"):
                r = segs[name[:-2] + "_r"]
                if s.shape != r.shape or not np.allclose(s.dims_m, r.dims_m, rtol=0, atol=1e-12):
                    raise ConfigError(f"symmetry violated: {name} and {r.name} dimensions differ")
                if abs(s.mass_fraction - r.mass_fraction) > 1e-12:
                    raise ConfigError(f"symmetry violated: {name} and {r.name} mass fractions differ")
        joints = {j.name: j for j in self.joints}
        mirror = np.array([1.0, -1.0, 1.0])
        for name, j in joints.items():
            if name.endswith("_l"):
                r = joints[name[:-2] + "_r"]
                if not (
                    np.allclose(np.multiply(j.offset_parent_m, mirror), r.offset_parent_m, atol=1e-9)
                    and np.allclose(np.multiply(j.offset_child_m, mirror), r.offset_child_m, atol=1e-9)
                ):
                    raise ConfigError(f"symmetry violated: {name} and {r.name} offsets are not mirror images")
            elif not name.endswith("_r"):
                if abs(j.offset_parent_m[1]) > 1e-9 or abs(j.offset_child_m[1]) > 1e-9:
                    raise ConfigError(f"symmetry violated: midline joint {name} has a lateral offset")

    @property
    def skeleton(self):
        sk = self._cache.get("skeleton")
        if sk is None:
            sk = _Skeleton(self)
            self._cache["skeleton"] = sk
        return sk


def load_body_config(path=None):
    """Read and validate a body config JSON file (bundled default when ``path`` is None)."""
    if path is None:
        text = resources.files("bodyflight").joinpath("data/default_body.json").read_text()
        src = "<bundled default>"
    else:
        path = Path(path)
        text = path.read_text()
        src = str(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{src}: parse error: {exc}") from exc
    return BodyConfig.from_dict(data)


def default_body_config():
    return load_body_config(None)


def save_body_config(config, path):
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")


# ---------------------------------------------------------------------------
# poses


def pose_from_dict(angles_by_joint, joint_names=JOINT_NAMES):
    pose = np.zeros(3 * len(joint_names))
    for i, name in enumerate(joint_names):
        if name in angles_by_joint:
            pose[3 * i:3 * i + 3] = angles_by_joint[name]
    return pose


def standard_neutral_pose():
    """Belly-to-earth box position used for calibration and default trims."""
    return pose_from_dict(STANDARD_NEUTRAL)


def validate_pose(pose, n_dof=N_DOF):
    pose = np.asarray(pose, dtype=float)
    if pose.shape != (n_dof,):
        raise ValueError(f"pose must have {n_dof} angles, got shape {pose.shape}")
    if not np.all(np.isfinite(pose)):
        raise ValueError("pose contains non-finite angles")
    if np.any(np.abs(pose) > np.pi + 1e-12):
        raise ValueError("pose angles must satisfy |angle| <= pi")
    return pose


def _mirror_permutation():
    perm = np.empty(N_DOF, dtype=int)
    for i, name in enumerate(JOINT_NAMES):
        if name.endswith("_l"):
            j = JOINT_NAMES.index(name[:-2] + "_r")
        elif name.endswith("_r"):
            j = JOINT_NAMES.index(name[:-2] + "_l")
        else:
            j = i
        perm[3 * i:3 * i + 3] = np.arange(3 * j, 3 * j + 3)
    return perm


_MIRROR_PERM = _mirror_permutation()
_MIRROR_SIGN = np.tile([-1.0, 1.0, -1.0], len(JOINT_NAMES))


def mirror_pose(pose):
    """Left-right mirror image: swap sides, negate psi and phi, keep theta."""
    pose = np.asarray(pose, dtype=float)
    return pose[..., _MIRROR_PERM] * _MIRROR_SIGN


def is_symmetric_pose(pose, atol=0.0):
    return bool(np.allclose(pose, mirror_pose(pose), rtol=0, atol=atol))


def symmetrize_pose(pose):
    return 0.5 * (np.asarray(pose, dtype=float) + mirror_pose(pose))


# ---------------------------------------------------------------------------
# forward kinematics and mass properties


def _shape_properties(seg, mass):
    """Principal inertia (e1, e2, e3) and projected areas (flat, end, side)."""
    d = seg.dims_m
    if seg.shape == "cylinder":
        length, r = d
        i1 = mass * r * r / 2
        i2 = i3 = mass * (3 * r * r + length * length) / 12
        areas = (2 * r * length, np.pi * r * r, 2 * r * length)
    elif seg.shape == "elliptic_cylinder":
        length, a, b = d
        i1 = mass * (a * a + b * b) / 4
        i2 = mass * (length * length / 12 + b * b / 4)
        i3 = mass * (length * length / 12 + a * a / 4)
        areas = (2 * a * length, np.pi * a * b, 2 * b * length)
    elif seg.shape == "ellipsoid":
        a1, a2, a3 = d
        i1 = mass * (a2 * a2 + a3 * a3) / 5
        i2 = mass * (a1 * a1 + a3 * a3) / 5
        i3 = mass * (a1 * a1 + a2 * a2) / 5
        areas = (np.pi * a1 * a2, np.pi * a2 * a3, np.pi * a1 * a3)
        length = 2 * a1
    else:  # box
        l1, l2, l3 = d
        i1 = mass * (l2 * l2 + l3 * l3) / 12
        i2 = mass * (l1 * l1 + l3 * l3) / 12
        i3 = mass * (l1 * l1 + l2 * l2) / 12
        areas = (l1 * l2, l2 * l3, l1 * l3)
        length = l1
    return np.array([i1, i2, i3]), areas, length


class _Skeleton:
    """Precomputed per-segment constants in segment-local frames."""

    def __init__(self, config):
        names = [s.name for s in config.segments]
        index = {n: i for i, n in enumerate(names)}
        n = len(names)
        self.n_segments = n
        self.names = names
        self.mass = np.array([s.mass_fraction for s in config.segments]) * config.total_mass
        self.total_mass = float(self.mass.sum())
        self.joint_parent = np.array([index[j.parent] for j in config.joints], dtype=int)
        self.joint_child = np.array([index[j.child] for j in config.joints], dtype=int)
        self.off_parent = np.array([j.offset_parent_m for j in config.joints], dtype=float).reshape(-1, 3)
        self.off_child = np.array([j.offset_child_m for j in config.joints], dtype=float).reshape(-1, 3)

        child_offset = {index[j.child]: np.asarray(j.offset_child_m, float) for j in config.joints}
        axes = np.empty((n, 3, 3))  # columns e1, e2, e3 in segment frame
        inertia = np.empty((n, 3, 3))
        areas = np.empty((n, 3))
        length = np.empty(n)
        for i, seg in enumerate(config.segments):
            e1 = child_offset.get(i, np.array([1.0, 0.0, 0.0]))
            if np.linalg.norm(e1) < 1e-12:
                e1 = np.array([1.0, 0.0, 0.0])
            e1 = e1 / np.linalg.norm(e1)
            z = np.array([0.0, 0.0, 1.0])
            e3 = z - (z @ e1) * e1
            if np.linalg.norm(e3) < 1e-9:
                raise ConfigError(f"segment {seg.name}: long axis may not be parallel to the body z axis")
            e3 /= np.linalg.norm(e3)
            e2 = np.cross(e3, e1)
            axes[i] = np.column_stack([e1, e2, e3])
            principal, a, ell = _shape_properties(seg, self.mass[i])
            inertia[i] = axes[i] @ np.diag(principal) @ axes[i].T
            areas[i] = config.aero.area_overrides.get(seg.name, a)
            length[i] = ell
        self.axes = axes
        self.local_inertia = inertia
        self.areas = areas  # flat (normal to e3), end (normal to e1), side (normal to e2)
        self.length = length
        self.chain_length = float(
            np.linalg.norm(self.off_parent, axis=1).sum() + np.linalg.norm(self.off_child, axis=1).sum()
        )


@dataclass(frozen=True, eq=False)
class BodyGeometry:
    """Placement of every segment for one pose, in the body frame.

    ``rotation[i]`` maps segment-``i`` vectors into the body frame and
    ``position[i]`` is the segment centre relative to the pelvis origin.
    ``r_cog`` holds the same centres relative to the composite cog, and
    ``e1``/``e2``/``normal`` are the segment's long, width and plate-normal
    axes expressed in the body frame.
    """

    rotation: np.ndarray
    position: np.ndarray
    cog: np.ndarray
    inertia: np.ndarray
    inertia_inv: np.ndarray
    r_cog: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    normal: np.ndarray
    areas: np.ndarray
    length: np.ndarray
    total_mass: float
    height: float


def forward_kinematics(config, pose):
    """Segment rotations ``(n, 3, 3)`` and centre positions ``(n, 3)`` in the body frame."""
    sk = config.skeleton
    pose = np.asarray(pose, dtype=float)
    joint_rot = euler_zyx_to_matrix(pose.reshape(-1, 3))
    rot = np.empty((sk.n_segments, 3, 3))
    pos = np.empty((sk.n_segments, 3))
    rot[0] = np.eye(3)
    pos[0] = 0.0
    for j in range(len(sk.joint_parent)):
        a, b = sk.joint_parent[j], sk.joint_child[j]
        rot[b] = rot[a] @ joint_rot[j]
        pos[b] = pos[a] + rot[a] @ sk.off_parent[j] + rot[b] @ sk.off_child[j]
    return rot, pos


_GEOMETRY_CACHE_SIZE = 64


def body_geometry(config, pose):
    """Cached :class:`BodyGeometry` for ``pose``."""
    pose = np.asarray(pose, dtype=float)
    key = pose.tobytes()
    cache = config._cache.setdefault("geometry", {})
    geo = cache.get(key)
    if geo is not None:
        return geo
    sk = config.skeleton
    rot, pos = forward_kinematics(config, pose)
    m = sk.mass
    cog = m @ pos / sk.total_mass
    r = pos - cog
    world_axes = rot @ sk.axes
    inertia = np.einsum("nij,njk,nlk->il", rot, sk.local_inertia, rot)
    inertia += np.eye(3) * np.sum(m * np.einsum("ni,ni->n", r, r)) - np.einsum("n,ni,nj->ij", m, r, r)
    inertia = 0.5 * (inertia + inertia.T)
    geo = BodyGeometry(
        rotation=rot,
        position=pos,
        cog=cog,
        inertia=inertia,
        inertia_inv=np.linalg.inv(inertia),
        r_cog=r,
        e1=world_axes[:, :, 0],
        e2=world_axes[:, :, 1],
        normal=world_axes[:, :, 2],
        areas=sk.areas,
        length=sk.length,
        total_mass=sk.total_mass,
        height=config.height,
    )
    if len(cache) >= _GEOMETRY_CACHE_SIZE:
        cache.pop(next(iter(cache)))
    cache[key] = geo
    return geo


def mass_properties(config, pose, pose_rate=None):
    """Composite cog and inertia about the cog, plus their rates.

    Rates come from a central difference over the poses at ``t ± δt/2``
    with ``δt = 1/240 s``; ``pose_rate=None`` means a static pose.
    """
    pose = np.asarray(pose, dtype=float)
    geo = body_geometry(config, pose)
    if pose_rate is None or not np.any(pose_rate):
        return MassProperties(geo.cog.copy(), geo.inertia.copy(), np.zeros(3), np.zeros((3, 3)))
    pose_rate = np.asarray(pose_rate, dtype=float)
    half = 0.5 * RATE_STEP * pose_rate
    hi = body_geometry(config, pose + half)
    lo = body_geometry(config, pose - half)
    return MassProperties(
        geo.cog.copy(),
        geo.inertia.copy(),
        (hi.cog - lo.cog) / RATE_STEP,
        (hi.inertia - lo.inertia) / RATE_STEP,
    )


# ---------------------------------------------------------------------------
# X-Sens quaternion ingestion

XSENS_SEGMENTS = (
    "pelvis", "l5", "l3", "t12", "t8", "neck", "head",
    "shoulder_r", "upper_arm_r", "forearm_r", "hand_r",
    "shoulder_l", "upper_arm_l", "forearm_l", "hand_l",
    "upper_leg_r", "lower_leg_r", "foot_r", "toe_r",
    "upper_leg_l", "lower_leg_l", "foot_l", "toe_l",
)
QUAT_COLUMNS = tuple(f"{s}_q{c}" for s in XSENS_SEGMENTS for c in "wxyz")

UNIT_TOLERANCE = 1e-3


@dataclass(frozen=True)
class SegmentMergeMap:
    """Assignment of the 23 source segments onto model segments.

    ``members`` maps every source segment to the model segment it is merged
    into; ``representative`` names, per model segment, the source segment
    whose orientation is used.
    """

    members: dict
    representative: dict

    def validate(self, model_segments=SEGMENT_NAMES):
        missing = set(XSENS_SEGMENTS) - set(self.members)
        if missing:
            raise ValueError(f"merge map does not cover source segments {sorted(missing)}")
        for seg in model_segments:
            rep = self.representative.get(seg)
            if rep is None:
                raise ValueError(f"merge map has no representative for {seg}")
            if self.members.get(rep) != seg:
                raise ValueError(f"representative {rep} is not merged into {seg}")


def default_merge_map():
    members = {s: s for s in XSENS_SEGMENTS if s in SEGMENT_NAMES}
    members.update({
        "l5": "abdomen", "l3": "abdomen",
        "t12": "thorax", "t8": "thorax", "shoulder_r": "thorax", "shoulder_l": "thorax",
        "neck": "head",
        "toe_r": "foot_r", "toe_l": "foot_l",
    })
    representative = {s: s for s in SEGMENT_NAMES}
    representative.update({"abdomen": "l5", "thorax": "t12"})
    return SegmentMergeMap(members=members, representative=representative)


@dataclass(frozen=True)
class QuatSample:
    time: float
    orientations: np.ndarray  # (23, 4) segment -> inertial, [w, x, y, z]

    def __post_init__(self):
        q = np.asarray(self.orientations, dtype=float)
        if q.shape != (len(XSENS_SEGMENTS), 4):
            raise ValueError(f"expected {len(XSENS_SEGMENTS)}x4 quaternions, got {q.shape}")
        norms = np.linalg.norm(q, axis=1)
        bad = np.abs(norms - 1.0) > UNIT_TOLERANCE
        if np.any(bad):
            names = [XSENS_SEGMENTS[i] for i in np.flatnonzero(bad)]
            raise ValueError(f"non-unit quaternion at t={self.time}: {names}")
        object.__setattr__(self, "orientations", quat_normalize(q))


def quat_to_pose(sample, mapping=None, config=None, return_flags=False):
    """Joint Euler angles from one sample of segment orientations.

    With ``return_flags=True`` also returns a boolean array (one per joint)
    that is set where ``|theta|`` exceeds 80 degrees.
    """
    mapping = mapping or default_merge_map()
    mapping.validate()
    joints = config.joints if config is not None else _default_joints()
    src = {name: i for i, name in enumerate(XSENS_SEGMENTS)}
    rot = quat_to_matrix(sample.orientations)
    pose = np.empty(3 * len(joints))
    flags = np.zeros(len(joints), dtype=bool)
    for k, j in enumerate(joints):
        ra = rot[src[mapping.representative[j.parent]]]
        rb = rot[src[mapping.representative[j.child]]]
        pose[3 * k:3 * k + 3], flags[k] = matrix_to_euler_zyx(ra.T @ rb)
    if flags.any():
        warnings.warn(
            f"gimbal proximity (|theta| > 80 deg) at t={sample.time} for joints "
            f"{[joints[k].name for k in np.flatnonzero(flags)]}",
            stacklevel=2,
        )
    return (pose, flags) if return_flags else pose


def pose_to_quat(pose, mapping=None, config=None, root=(1.0, 0.0, 0.0, 0.0), time=0.0):
    """Inverse of :func:`quat_to_pose`: merged sources share their model segment's orientation."""
    mapping = mapping or default_merge_map()
    config = config or _default_config()
    rot, _ = forward_kinematics(config, pose)
    root_rot = quat_to_matrix(quat_normalize(np.asarray(root, float)))
    seg_index = {s.name: i for i, s in enumerate(config.segments)}
    q = np.array([matrix_to_quat(root_rot @ rot[seg_index[mapping.members[s]]]) for s in XSENS_SEGMENTS])
    return QuatSample(time=time, orientations=q)


def _default_config():
    cfg = _DEFAULTS.get("config")
    if cfg is None:
        cfg = _DEFAULTS["config"] = default_body_config()
    return cfg


def _default_joints():
    return _default_config().joints


_DEFAULTS = {}


def with_aero(config, **changes):
    """Copy of ``config`` with some aerodynamic fields replaced."""
    data = copy.deepcopy(config.to_dict())
    data["aero"].update(changes)
    return BodyConfig.from_dict(data, strict=len(config.segments) == len(SEGMENT_NAMES))
