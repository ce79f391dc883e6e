"""Forward kinematics of a simplified human model and the lifting geometry.

Each side of the body is a serial chain rooted at that side's foot frame:
foot -> ankle -> knee -> hip -> pelvis -> L5S1 -> T9T8 -> shoulder ->
elbow -> hand.  Foot frames sit on the floor under the ankle with x pointing
forward, y to the left and z up.  Feet are fixed, as in the lifting protocol,
so no floating base is involved.

With every angle at zero all links point straight up (arms overhead).  A
flexion rotates about the frame's y axis; positive flexion leans the shank,
trunk and arm forward, while knee and elbow flexion fold their distal link
back toward the proximal one.  x/z rotations of side joints are mirrored on
the right so that swapping the left and right angle blocks mirrors the pose.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .core import N_JOINTS, StateFrame

# 13 joints, 31 scalar angles.  This ordering is canonical across the package.
JOINT_LAYOUT: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("l5s1", ("flexion", "lateral", "axial")),
    ("t9t8", ("flexion", "lateral", "axial")),
    ("neck", ("flexion", "lateral", "axial")),
    ("left_hip", ("flexion", "abduction", "rotation")),
    ("left_knee", ("flexion",)),
    ("left_ankle", ("flexion", "inversion")),
    ("right_hip", ("flexion", "abduction", "rotation")),
    ("right_knee", ("flexion",)),
    ("right_ankle", ("flexion", "inversion")),
    ("left_shoulder", ("flexion", "abduction", "rotation")),
    ("left_elbow", ("flexion", "pronation")),
    ("right_shoulder", ("flexion", "abduction", "rotation")),
    ("right_elbow", ("flexion", "pronation")),
)

ANGLE_NAMES: tuple[str, ...] = tuple(
    f"{joint}_{dof}" for joint, dofs in JOINT_LAYOUT for dof in dofs
)
assert len(ANGLE_NAMES) == N_JOINTS

ANGLE_INDEX = {name: i for i, name in enumerate(ANGLE_NAMES)}

SIDES = ("left", "right")

# segment mass fractions of body mass (feet are lumped at the ankles)
SEGMENT_MASS = {
    "foot": 0.0145,
    "shank": 0.0465,
    "thigh": 0.100,
    "upper_arm": 0.028,
    "forearm": 0.022,
    "trunk": 0.497,
    "head": 0.081,
}


@dataclass(frozen=True)
class Skeleton:
    """Link lengths in meters; defaults approximate a 1.75 m adult."""

    ankle_height: float = 0.08
    shank: float = 0.42
    thigh: float = 0.42
    pelvis: float = 0.10
    lumbar: float = 0.20
    thoracic: float = 0.24
    neck: float = 0.20
    upper_arm: float = 0.31
    forearm: float = 0.37  # elbow to hand centre of mass
    hip_half_width: float = 0.10
    shoulder_half_width: float = 0.10
    body_mass: float = 75.0
    angle_map: tuple[str, ...] = field(default=ANGLE_NAMES)

    def __post_init__(self):
        for f in fields(self):
            if f.name == "angle_map":
                continue
            value = getattr(self, f.name)
            if not value > 0:
                raise ValueError(f"skeleton {f.name} must be > 0, got {value}")
        amap = tuple(self.angle_map)
        if len(amap) != N_JOINTS or sorted(amap) != sorted(ANGLE_NAMES):
            raise ValueError("angle_map must cover all 31 joint angles exactly once")
        object.__setattr__(self, "angle_map", amap)
        object.__setattr__(self, "_index", {name: i for i, name in enumerate(amap)})

    def index(self, name: str) -> int:
        return self._index[name]

    @property
    def arm_length(self) -> float:
        return self.upper_arm + self.forearm

    def scaled(self, s: float) -> "Skeleton":
        kw = {f.name: getattr(self, f.name) * s for f in fields(self)
              if f.name not in ("angle_map", "body_mass")}
        return Skeleton(**kw, body_mass=self.body_mass, angle_map=self.angle_map)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["angle_map"] = list(self.angle_map)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Skeleton":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown skeleton keys: {sorted(unknown)}")
        d = dict(d)
        if "angle_map" in d:
            d["angle_map"] = tuple(d["angle_map"])
        return cls(**d)


# -- rotation helpers.  A rotation is a tuple of its nine entries in row-major
# order, each an array over the batch.  Only elementwise products are used, so a
# frame gives the same bits alone or inside a batch.

def _rotation(a, axis):
    c, s = np.cos(a), np.sin(a)
    o, z = np.ones_like(c), np.zeros_like(c)
    if axis == "x":
        return (o, z, z, z, c, -s, z, s, c)
    if axis == "y":
        return (c, z, s, z, o, z, -s, z, c)
    return (c, -s, z, s, c, z, z, z, o)


def _rot_x(a):
    return _rotation(a, "x")


def _rot_y(a):
    return _rotation(a, "y")


def _rot_z(a):
    return _rotation(a, "z")


def _mm(a, b):
    return tuple(a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j] + a[3 * i + 2] * b[6 + j]
                 for i in range(3) for j in range(3))


def _mv(r, v):
    """Rotate a constant 3-vector ``v`` by the rotation ``r``; returns (..., 3)."""
    return np.stack([r[3 * i] * v[0] + r[3 * i + 1] * v[1] + r[3 * i + 2] * v[2]
                     for i in range(3)], axis=-1)


def _as_matrix(r) -> np.ndarray:
    return np.stack(r, axis=-1).reshape(r[0].shape + (3, 3))


@dataclass
class ChainPoses:
    """Joint positions (meters) of one side's chain, in that side's foot frame."""

    ankle: np.ndarray
    knee: np.ndarray
    hip: np.ndarray
    pelvis: np.ndarray
    l5s1: np.ndarray
    t9t8: np.ndarray
    neck_base: np.ndarray
    head: np.ndarray
    shoulder: np.ndarray
    elbow: np.ndarray
    hand: np.ndarray
    hand_rotation: np.ndarray


def side_chain(skeleton: Skeleton, q, side: str) -> ChainPoses:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != N_JOINTS:
        raise ValueError(f"expected {N_JOINTS} joint angles, got {q.shape[-1]}")
    m = 1.0 if side == "left" else -1.0

    def ang(name):
        return q[..., skeleton.index(name)]

    def trunk_rot(joint):
        return _mm(_mm(_rot_y(ang(f"{joint}_flexion")), _rot_x(ang(f"{joint}_lateral"))),
                   _rot_z(ang(f"{joint}_axial")))

    batch = q.shape[:-1]
    ankle = np.zeros(batch + (3,))
    ankle[..., 2] = skeleton.ankle_height

    r = _mm(_rot_y(ang(f"{side}_ankle_flexion")), _rot_x(m * ang(f"{side}_ankle_inversion")))
    knee = ankle + _mv(r, (0.0, 0.0, skeleton.shank))
    r = _mm(r, _rot_y(-ang(f"{side}_knee_flexion")))
    hip = knee + _mv(r, (0.0, 0.0, skeleton.thigh))
    r = _mm(r, _mm(_mm(_rot_y(ang(f"{side}_hip_flexion")), _rot_x(m * ang(f"{side}_hip_abduction"))),
                   _rot_z(m * ang(f"{side}_hip_rotation"))))
    pelvis = hip + _mv(r, (0.0, -m * skeleton.hip_half_width, 0.0))
    l5s1 = pelvis + _mv(r, (0.0, 0.0, skeleton.pelvis))
    r = _mm(r, trunk_rot("l5s1"))
    t9t8 = l5s1 + _mv(r, (0.0, 0.0, skeleton.lumbar))
    r = _mm(r, trunk_rot("t9t8"))
    neck_base = t9t8 + _mv(r, (0.0, 0.0, skeleton.thoracic))
    head = neck_base + _mv(_mm(r, trunk_rot("neck")), (0.0, 0.0, skeleton.neck))
    shoulder = neck_base + _mv(r, (0.0, m * skeleton.shoulder_half_width, 0.0))
    r = _mm(r, _mm(_mm(_rot_y(ang(f"{side}_shoulder_flexion")), _rot_x(m * ang(f"{side}_shoulder_abduction"))),
                   _rot_z(m * ang(f"{side}_shoulder_rotation"))))
    elbow = shoulder + _mv(r, (0.0, 0.0, skeleton.upper_arm))
    r = _mm(r, _mm(_rot_y(-ang(f"{side}_elbow_flexion")), _rot_z(m * ang(f"{side}_elbow_pronation"))))
    hand = elbow + _mv(r, (0.0, 0.0, skeleton.forearm))
    return ChainPoses(ankle, knee, hip, pelvis, l5s1, t9t8, neck_base, head, shoulder, elbow, hand,
                      _as_matrix(r))


def forward_kinematics(skeleton: Skeleton, q) -> dict[str, ChainPoses]:
    """Poses of both chains; ``q`` may carry leading batch dimensions."""
    return {side: side_chain(skeleton, q, side) for side in SIDES}


def hand_positions(skeleton: Skeleton, q) -> tuple[np.ndarray, np.ndarray]:
    """Left hand in the left foot frame and right hand in the right foot frame."""
    return side_chain(skeleton, q, "left").hand, side_chain(skeleton, q, "right").hand


def mirror_angles(q) -> np.ndarray:
    """Angles of the mirror-image posture (left and right swapped)."""
    q = np.array(q, dtype=float)
    out = q.copy()
    for name, i in ANGLE_INDEX.items():
        if name.startswith("left_"):
            out[..., ANGLE_INDEX["right_" + name[5:]]] = q[..., i]
        elif name.startswith("right_"):
            out[..., ANGLE_INDEX["left_" + name[6:]]] = q[..., i]
        elif not name.endswith("_flexion"):
            out[..., i] = -q[..., i]
    return out


@dataclass(frozen=True)
class GeometrySnapshot:
    """Hand geometry in centimeters; H and V are the left/right means."""

    H: float
    V: float
    H_left: float
    H_right: float
    V_left: float
    V_right: float


def hand_geometry(skeleton: Skeleton, q):
    """Per-side and averaged (H, V) in cm; works on batches of angle vectors.

    Returns ``(H, V, H_left, H_right, V_left, V_right)``.
    """
    left, right = hand_positions(skeleton, q)
    h_l = 100.0 * np.hypot(left[..., 0], left[..., 1])
    h_r = 100.0 * np.hypot(right[..., 0], right[..., 1])
    v_l = 100.0 * left[..., 2]
    v_r = 100.0 * right[..., 2]
    return (h_l + h_r) / 2.0, (v_l + v_r) / 2.0, h_l, h_r, v_l, v_r


def geometry_snapshot(skeleton: Skeleton, q) -> GeometrySnapshot:
    vals = hand_geometry(skeleton, np.asarray(q, dtype=float))
    return GeometrySnapshot(*(float(v) for v in vals))


def _angles(x) -> np.ndarray:
    return x.q if isinstance(x, StateFrame) else np.asarray(x, dtype=float)


def niosh_geometry(origin, current, skeleton: Skeleton) -> tuple[float, float, float]:
    """(H, V, D) in cm: hand geometry at ``current``, travel measured from ``origin``.

    Both arguments may be StateFrames or raw 31-angle vectors.
    """
    H, V = hand_geometry(skeleton, _angles(current))[:2]
    V0 = hand_geometry(skeleton, _angles(origin))[1]
    return float(H), float(V), float(abs(V - V0))


def center_of_mass(skeleton: Skeleton, q) -> np.ndarray:
    """Whole-body CoM, averaged over both foot frames (meters)."""
    acc = 0.0
    for side in SIDES:
        c = side_chain(skeleton, q, side)
        m = SEGMENT_MASS
        acc = acc + (m["foot"] * c.ankle
                     + m["shank"] * (c.ankle + c.knee) / 2
                     + m["thigh"] * (c.knee + c.hip) / 2
                     + m["upper_arm"] * (c.shoulder + c.elbow) / 2
                     + m["forearm"] * (c.elbow + c.hand) / 2
                     + 0.5 * m["trunk"] * (c.pelvis + c.neck_base) / 2
                     + 0.5 * m["head"] * c.head)
    return acc
