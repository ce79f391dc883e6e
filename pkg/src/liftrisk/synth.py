"""Synthetic lifting executions with exact phase labels.

A lift is a sequence of joint-space keyframes joined by minimum-jerk
segments::

    rest --(squat)--> pick-up posture --(rise)--> placement posture
         --(hold, return)--> rest

The pick-up and placement postures are solved so the hands land exactly on
the requested (H, V) targets: leg and trunk angles come from the script (plus
Gaussian jitter), the hip flexion is solved so the target is within reach,
and a planar two-link arm inverse kinematics places the hands.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .core import DT, N_JOINTS, SAMPLE_RATE, ActionLabel, FrameArrays, write_frames, read_frames
from .kinematics import ANGLE_INDEX, Skeleton, center_of_mass, hand_geometry, side_chain

G = 9.81
REACH_FRACTION = 0.93  # shoulder-to-hand distance as a share of arm length


class UnreachableError(ValueError):
    pass


@dataclass(frozen=True)
class LiftScript:
    """Parameters of one lift; durations in seconds, heights in cm."""

    stand_before: float = 4.5
    squat: float = 2.0
    rise: float = 2.0
    stand_after: float = 6.5
    squat_depth: float = 1.75      # peak knee flexion, rad
    lift_height: float = 80.0      # hand height at placement
    origin_h: float = 47.0
    origin_v: float = 8.0
    end_h: float = 60.0            # kept below the 63 cm horizontal limit
    payload: float = 3.0           # kg
    angle_jitter: float = 0.01     # rad, std of keyframe perturbations
    timing_jitter: float = 0.10    # relative, uniform +-
    seed: int = 0
    allow_any_height: bool = False

    def __post_init__(self):
        for name in ("stand_before", "squat", "rise", "stand_after"):
            if not getattr(self, name) > 0:
                raise ValueError(f"degenerate phase: {name} duration must be > 0")
        if not self.allow_any_height and not 68.0 <= self.lift_height <= 92.0:
            raise ValueError(f"lift height {self.lift_height} cm outside [68, 92]")
        if self.payload < 0 or self.angle_jitter < 0 or not 0 <= self.timing_jitter < 1:
            raise ValueError("payload and jitter amplitudes must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LabeledSequence:
    arrays: FrameArrays
    boundaries: dict            # squat_start, rise_start, rise_end (seconds)
    geometry: dict              # H, V, H_left, H_right, V_left, V_right per frame (cm)
    script: LiftScript
    lift_id: int = 0
    payload_held: np.ndarray = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.arrays)

    @property
    def features(self) -> np.ndarray:
        return self.arrays.features

    @property
    def labels(self) -> np.ndarray:
        return self.arrays.labels

    def frames(self):
        return self.arrays.frames()


# -- trajectory primitives ----------------------------------------------------

def min_jerk(q0, q1, duration, t):
    """Minimum-jerk position and velocity from q0 to q1 at local times t."""
    s = np.clip(np.asarray(t, dtype=float) / duration, 0.0, 1.0)[:, None]
    d = np.asarray(q1) - np.asarray(q0)
    pos = q0 + d * (s ** 3) * (10.0 - 15.0 * s + 6.0 * s * s)
    vel = d * 30.0 * s * s * (1.0 - s) ** 2 / duration
    return pos, vel


def _pitch(q):
    """Absolute sagittal pitch of the upper trunk for a purely sagittal pose."""
    ix = ANGLE_INDEX
    return (q[ix["left_ankle_flexion"]] - q[ix["left_knee_flexion"]] + q[ix["left_hip_flexion"]]
            + q[ix["l5s1_flexion"]] + q[ix["t9t8_flexion"]])


def _set_both(q, joint_dof, value):
    q[ANGLE_INDEX[f"left_{joint_dof}"]] = value
    q[ANGLE_INDEX[f"right_{joint_dof}"]] = value


def arm_ik(shoulder_xz, target_xz, upper, fore, trunk_pitch):
    """Planar two-link arm solution -> (shoulder flexion, elbow flexion)."""
    dx = target_xz[0] - shoulder_xz[0]
    dz = target_xz[1] - shoulder_xz[1]
    r = np.hypot(dx, dz)
    if r > upper + fore - 1e-9 or r < abs(upper - fore):
        raise UnreachableError(f"hand target at {r:.3f} m from the shoulder is out of reach")
    cos_e = (r * r - upper * upper - fore * fore) / (2.0 * upper * fore)
    e = float(np.arccos(np.clip(cos_e, -1.0, 1.0)))
    phi = np.arctan2(dx, dz)
    gamma = np.arctan2(fore * np.sin(e), upper + fore * np.cos(e))
    return float(phi + gamma - trunk_pitch), e


def reach_posture(skeleton: Skeleton, base: np.ndarray, H_cm: float, V_cm: float) -> np.ndarray:
    """Complete ``base`` (legs, spine set) with hip flexion and arm angles so the
    hands reach (H, V) in the foot frames."""
    q = base.copy()
    H, V = H_cm / 100.0, V_cm / 100.0
    # hand shares the shoulder's lateral coordinate; solve its forward component
    lat = skeleton.shoulder_half_width - skeleton.hip_half_width
    if H < abs(lat):
        raise UnreachableError("horizontal target smaller than the shoulder offset")
    tx = np.sqrt(H * H - lat * lat)
    reach = REACH_FRACTION * skeleton.arm_length

    def gap(hip_flex):
        qq = q.copy()
        _set_both(qq, "hip_flexion", hip_flex)
        s = side_chain(skeleton, qq, "left").shoulder
        return np.hypot(s[0] - tx, s[2] - V) - reach

    grid = np.linspace(-0.4, 3.0, 171)
    vals = np.array([gap(g) for g in grid])
    cross = np.flatnonzero((vals[:-1] > 0) & (vals[1:] <= 0))
    if len(cross) == 0:
        if vals[0] <= 0:
            hip = grid[0]
        else:
            raise UnreachableError(f"hand target H={H_cm} cm, V={V_cm} cm unreachable for skeleton")
    else:
        k = cross[0]
        hip = brentq(gap, grid[k], grid[k + 1], xtol=1e-14)
    _set_both(q, "hip_flexion", hip)
    s = side_chain(skeleton, q, "left").shoulder
    sh, el = arm_ik((s[0], s[2]), (tx, V), skeleton.upper_arm, skeleton.forearm, _pitch(q))
    _set_both(q, "shoulder_flexion", sh)
    _set_both(q, "elbow_flexion", el)
    return q


def rest_posture(rng, jitter) -> np.ndarray:
    q = np.zeros(N_JOINTS)
    n = lambda: rng.normal(0.0, jitter) if jitter else 0.0  # noqa: E731
    _set_both(q, "knee_flexion", 0.03 + abs(n()))
    _set_both(q, "ankle_flexion", 0.015 + n())
    _set_both(q, "hip_flexion", 0.0 + n())
    q[ANGLE_INDEX["l5s1_flexion"]] = 0.02 + n()
    _set_both(q, "shoulder_flexion", np.pi - 0.05 + n())
    _set_both(q, "elbow_flexion", 0.15 + n())
    return q


def pickup_posture(skeleton, script: LiftScript, rng) -> np.ndarray:
    j = script.angle_jitter
    n = lambda: rng.normal(0.0, j) if j else 0.0  # noqa: E731
    q = np.zeros(N_JOINTS)
    depth = script.squat_depth + n()
    _set_both(q, "knee_flexion", depth)
    _set_both(q, "ankle_flexion", 0.35 * depth + n())
    q[ANGLE_INDEX["l5s1_flexion"]] = 0.2 + n()
    q[ANGLE_INDEX["t9t8_flexion"]] = 0.2 + n()
    q[ANGLE_INDEX["neck_flexion"]] = -0.3 + n()
    return reach_posture(skeleton, q, script.origin_h, script.origin_v)


def placement_posture(skeleton, script: LiftScript, rng) -> np.ndarray:
    j = script.angle_jitter
    n = lambda: rng.normal(0.0, j) if j else 0.0  # noqa: E731
    q = np.zeros(N_JOINTS)
    _set_both(q, "knee_flexion", 0.08 + abs(n()))
    _set_both(q, "ankle_flexion", 0.04 + n())
    q[ANGLE_INDEX["l5s1_flexion"]] = 0.2 + n()
    q[ANGLE_INDEX["t9t8_flexion"]] = 0.2 + n()
    q[ANGLE_INDEX["neck_flexion"]] = -0.2 + n()
    return reach_posture(skeleton, q, script.end_h, script.lift_height)


# head sway only: it leaves the hand geometry untouched
_SWAY_JOINTS = ("neck_flexion", "neck_axial")
_SWAY_AMPLITUDE = (0.01, 0.01)


def generate_lift(script: LiftScript, skeleton: Skeleton | None = None, lift_id: int = 0) -> LabeledSequence:
    """Sample one lift at 100 Hz with analytic velocities and a wrench model."""
    skeleton = skeleton or Skeleton()
    rng = np.random.default_rng(script.seed)
    tj = script.timing_jitter
    scale = lambda: 1.0 + (rng.uniform(-tj, tj) if tj else 0.0)  # noqa: E731
    d_before = script.stand_before * scale()
    d_squat = script.squat * scale()
    d_rise = script.rise * scale()
    d_after = script.stand_after * scale()

    q_rest = rest_posture(rng, script.angle_jitter)
    q_pick = pickup_posture(skeleton, script, rng)
    q_place = placement_posture(skeleton, script, rng)
    q_rest2 = rest_posture(rng, script.angle_jitter)
    hold = min(0.3, 0.2 * d_after)
    d_return = min(1.5, 0.5 * d_after)

    t_squat = d_before
    t_rise = t_squat + d_squat
    t_end_rise = t_rise + d_rise
    total = t_end_rise + d_after
    n = int(round(total * SAMPLE_RATE))
    t = np.arange(n) * DT

    q = np.empty((n, N_JOINTS))
    dq = np.zeros((n, N_JOINTS))
    segments = [
        (0.0, t_squat, q_rest, q_rest),
        (t_squat, t_rise, q_rest, q_pick),
        (t_rise, t_end_rise, q_pick, q_place),
        (t_end_rise, t_end_rise + hold, q_place, q_place),
        (t_end_rise + hold, t_end_rise + hold + d_return, q_place, q_rest2),
        (t_end_rise + hold + d_return, np.inf, q_rest2, q_rest2),
    ]
    for start, stop, qa, qb in segments:
        mask = (t >= start) & (t < stop)
        if not mask.any():
            continue
        if qa is qb:
            q[mask] = qa
        else:
            q[mask], dq[mask] = min_jerk(qa, qb, stop - start, t[mask] - start)

    for name, amp in zip(_SWAY_JOINTS, _SWAY_AMPLITUDE):
        f = rng.uniform(0.15, 0.45)
        ph = rng.uniform(0, 2 * np.pi)
        w = 2 * np.pi * f
        q[:, ANGLE_INDEX[name]] += amp * np.sin(w * t + ph)
        dq[:, ANGLE_INDEX[name]] += amp * w * np.cos(w * t + ph)

    labels = np.full(n, int(ActionLabel.STANDING))
    labels[(t >= t_squat) & (t < t_rise)] = int(ActionLabel.SQUATTING)
    labels[(t >= t_rise) & (t < t_end_rise)] = int(ActionLabel.RISING)
    held = (t >= t_rise) & (t < t_end_rise)

    w = wrench_model(skeleton, q, t, held, script.payload, rng)
    geo = dict(zip(("H", "V", "H_left", "H_right", "V_left", "V_right"), hand_geometry(skeleton, q)))
    arrays = FrameArrays(t, q, dq, w, labels)
    bounds = {"squat_start": t_squat, "rise_start": t_rise, "rise_end": t_end_rise}
    return LabeledSequence(arrays, bounds, geo, script, lift_id, held)


def wrench_model(skeleton: Skeleton, q, t, held, payload, rng) -> np.ndarray:
    """Quasi-static foot wrenches: weight split between feet with slow sway;
    the pitch moment follows the horizontal centre of mass."""
    body = skeleton.body_mass
    com_x = center_of_mass(skeleton, q)[:, 0]
    hand_x = 0.5 * (side_chain(skeleton, q, "left").hand[:, 0] + side_chain(skeleton, q, "right").hand[:, 0])
    mass = body + payload * held
    x_cop = (body * com_x + payload * held * hand_x) / mass
    total = mass * G
    f = rng.uniform(0.1, 0.3)
    ph = rng.uniform(0, 2 * np.pi)
    share = 0.5 + 0.02 * np.sin(2 * np.pi * f * t + ph)
    w = np.zeros((len(t), 12))
    for k, part in enumerate((share, 1.0 - share)):
        fz = part * total
        y_cop = 0.005 * np.sin(2 * np.pi * f * t + ph) * (1 if k == 0 else -1)
        w[:, 6 * k + 1] = 0.01 * fz * np.cos(2 * np.pi * f * t + ph)
        w[:, 6 * k + 2] = fz
        w[:, 6 * k + 3] = y_cop * fz
        w[:, 6 * k + 4] = -x_cop * fz
    return w


# -- datasets -----------------------------------------------------------------

@dataclass(frozen=True)
class ScriptDistribution:
    """Ranges for per-lift script parameters; sampled uniformly."""

    lift_height: tuple[float, float] = (68.0, 92.0)
    payload: tuple[float, float] = (3.0, 10.0)
    squat_depth: tuple[float, float] = (1.6, 1.9)
    stand_before: float = 4.5
    squat: float = 2.0
    rise: float = 2.0
    stand_after: float = 6.5
    angle_jitter: float = 0.01
    timing_jitter: float = 0.10

    def sample(self, rng: np.random.Generator, seed: int) -> LiftScript:
        return LiftScript(
            stand_before=self.stand_before, squat=self.squat, rise=self.rise,
            stand_after=self.stand_after,
            squat_depth=float(rng.uniform(*self.squat_depth)),
            lift_height=float(rng.uniform(*self.lift_height)),
            payload=float(rng.uniform(*self.payload)),
            angle_jitter=self.angle_jitter, timing_jitter=self.timing_jitter,
            seed=seed,
        )

    @classmethod
    def from_dict(cls, d: dict) -> "ScriptDistribution":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown generator keys: {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)


@dataclass
class Dataset:
    train: list[LabeledSequence]
    val: list[LabeledSequence]
    test: list[LabeledSequence]
    manifest: list[dict]

    def split(self, name: str) -> list[LabeledSequence]:
        return getattr(self, name)


def split_sizes(n_lifts: int) -> tuple[int, int, int]:
    if n_lifts < 10:
        raise ValueError(f"need at least 10 lifts to populate 70/20/10 splits, got {n_lifts}")
    n_train = int(round(0.7 * n_lifts))
    n_val = int(round(0.2 * n_lifts))
    return n_train, n_val, n_lifts - n_train - n_val


def generate_dataset(n_lifts: int, distribution: ScriptDistribution | None = None, seed: int = 0,
                     skeleton: Skeleton | None = None) -> Dataset:
    """Independent lifts split 70/20/10 by whole lift."""
    distribution = distribution or ScriptDistribution()
    skeleton = skeleton or Skeleton()
    sizes = split_sizes(n_lifts)
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**31 - 1, size=n_lifts)
    scripts = [distribution.sample(rng, int(s)) for s in seeds]
    order = rng.permutation(n_lifts)
    names = ["train"] * sizes[0] + ["val"] * sizes[1] + ["test"] * sizes[2]
    split_of = {int(lift): name for lift, name in zip(order, names)}

    out = {"train": [], "val": [], "test": []}
    manifest = []
    for lift_id, script in enumerate(scripts):
        seq = generate_lift(script, skeleton, lift_id)
        out[split_of[lift_id]].append(seq)
        manifest.append({"lift_id": lift_id, "split": split_of[lift_id], "seed": script.seed,
                         "frames": len(seq), "sample_rate_hz": SAMPLE_RATE,
                         "boundaries": seq.boundaries, "script": script.to_dict()})
    return Dataset(out["train"], out["val"], out["test"], manifest)


def lift_filename(lift_id: int) -> str:
    return f"lift_{lift_id:04d}.jsonl"


def save_dataset(dataset: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    (out / "lifts").mkdir(parents=True, exist_ok=True)
    for seq in dataset.train + dataset.val + dataset.test:
        with open(out / "lifts" / lift_filename(seq.lift_id), "w", encoding="utf-8") as fh:
            write_frames(seq.frames(), fh)
    with open(out / "manifest.jsonl", "w", encoding="utf-8") as fh:
        for rec in dataset.manifest:
            fh.write(json.dumps(rec) + "\n")
    return out


def load_dataset(data_dir, skeleton: Skeleton | None = None) -> Dataset:
    skeleton = skeleton or Skeleton()
    root = Path(data_dir)
    with open(root / "manifest.jsonl", encoding="utf-8") as fh:
        manifest = [json.loads(line) for line in fh if line.strip()]
    out = {"train": [], "val": [], "test": []}
    for rec in manifest:
        with open(root / "lifts" / lift_filename(rec["lift_id"]), encoding="utf-8") as fh:
            arrays = FrameArrays.from_frames(list(read_frames(fh)))
        script = LiftScript(**rec["script"])
        b = rec["boundaries"]
        held = (arrays.t >= b["rise_start"]) & (arrays.t < b["rise_end"])
        geo = dict(zip(("H", "V", "H_left", "H_right", "V_left", "V_right"),
                       hand_geometry(skeleton, arrays.q)))
        out[rec["split"]].append(LabeledSequence(arrays, b, geo, script, rec["lift_id"], held))
    return Dataset(out["train"], out["val"], out["test"], manifest)


def task_script(task: int, **overrides) -> LiftScript:
    """Scripts mirroring the three experimental tasks (lift height, payload)."""
    heights = {1: 68.0, 2: 80.0, 3: 92.0}
    payloads = {1: 3.0, 2: 7.0, 3: 10.0}
    return replace(LiftScript(lift_height=heights[task], payload=payloads[task]), **overrides)
