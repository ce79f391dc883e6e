import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from liftrisk.core import StateFrame
from liftrisk.kinematics import (
    ANGLE_INDEX,
    ANGLE_NAMES,
    Skeleton,
    center_of_mass,
    forward_kinematics,
    geometry_snapshot,
    hand_geometry,
    hand_positions,
    mirror_angles,
    niosh_geometry,
)
from liftrisk.synth import reach_posture, rest_posture

SK = Skeleton()
angles = arrays(float, 31, elements=st.floats(-1.5, 1.5, allow_nan=False))

mp.mp.dps = 40


def _mrot(axis, a):
    c, s = mp.cos(a), mp.sin(a)
    if axis == "x":
        r = [[1, 0, 0], [0, c, -s], [0, s, c]]
    elif axis == "y":
        r = [[c, 0, s], [0, 1, 0], [-s, 0, c]]
    else:
        r = [[c, -s, 0], [s, c, 0], [0, 0, 1]]
    m = mp.eye(4)
    for i in range(3):
        for j in range(3):
            m[i, j] = r[i][j]
    return m


def _mtrans(x, y, z):
    m = mp.eye(4)
    m[0, 3], m[1, 3], m[2, 3] = x, y, z
    return m


def oracle_hand(sk, q, side):
    """Homogeneous-transform chain evaluated in 40-digit arithmetic."""
    m = 1 if side == "left" else -1
    a = {name: mp.mpf(float(q[i])) for i, name in enumerate(ANGLE_NAMES)}
    L = {k: mp.mpf(v) for k, v in sk.to_dict().items() if k != "angle_map"}
    s = side
    chain = [
        _mtrans(0, 0, L["ankle_height"]),
        _mrot("y", a[f"{s}_ankle_flexion"]), _mrot("x", m * a[f"{s}_ankle_inversion"]),
        _mtrans(0, 0, L["shank"]),
        _mrot("y", -a[f"{s}_knee_flexion"]),
        _mtrans(0, 0, L["thigh"]),
        _mrot("y", a[f"{s}_hip_flexion"]), _mrot("x", m * a[f"{s}_hip_abduction"]),
        _mrot("z", m * a[f"{s}_hip_rotation"]),
        _mtrans(0, -m * L["hip_half_width"], L["pelvis"]),
    ]
    for joint, length in (("l5s1", "lumbar"), ("t9t8", "thoracic")):
        chain += [_mrot("y", a[f"{joint}_flexion"]), _mrot("x", a[f"{joint}_lateral"]),
                  _mrot("z", a[f"{joint}_axial"]), _mtrans(0, 0, L[length])]
    chain += [
        _mtrans(0, m * L["shoulder_half_width"], 0),
        _mrot("y", a[f"{s}_shoulder_flexion"]), _mrot("x", m * a[f"{s}_shoulder_abduction"]),
        _mrot("z", m * a[f"{s}_shoulder_rotation"]),
        _mtrans(0, 0, L["upper_arm"]),
        _mrot("y", -a[f"{s}_elbow_flexion"]), _mrot("z", m * a[f"{s}_elbow_pronation"]),
        _mtrans(0, 0, L["forearm"]),
    ]
    T = mp.eye(4)
    for link in chain:
        T = T * link
    return np.array([float(T[i, 3]) for i in range(3)])


def test_layout_covers_31_unique_angles():
    assert len(ANGLE_NAMES) == 31 and len(set(ANGLE_NAMES)) == 31
    with pytest.raises(ValueError):
        Skeleton(angle_map=ANGLE_NAMES[:-1] + (ANGLE_NAMES[0],))
    with pytest.raises(ValueError):
        Skeleton(shank=0.0)
    with pytest.raises(ValueError):
        Skeleton.from_dict({"tibia": 0.4})


def test_zero_pose_stacks_hands_over_feet():
    left, right = hand_positions(SK, np.zeros(31))
    total = (SK.ankle_height + SK.shank + SK.thigh + SK.pelvis + SK.lumbar + SK.thoracic
             + SK.upper_arm + SK.forearm)
    for hand in (left, right):
        assert np.allclose(hand[:2], 0.0, atol=1e-15)
        assert hand[2] == pytest.approx(total, abs=1e-12)


def test_hip_flexion_90_puts_trunk_and_arms_horizontal():
    q = np.zeros(31)
    q[ANGLE_INDEX["left_hip_flexion"]] = q[ANGLE_INDEX["right_hip_flexion"]] = math.pi / 2
    reach = SK.pelvis + SK.lumbar + SK.thoracic + SK.upper_arm + SK.forearm
    H, V = hand_geometry(SK, q)[:2]
    assert H == pytest.approx(100 * reach, abs=1e-9)
    assert V == pytest.approx(100 * (SK.ankle_height + SK.shank + SK.thigh), abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(angles)
def test_matches_high_precision_oracle(q):
    left, right = hand_positions(SK, q)
    assert np.max(np.abs(left - oracle_hand(SK, q, "left"))) < 1e-9
    assert np.max(np.abs(right - oracle_hand(SK, q, "right"))) < 1e-9


@settings(max_examples=30, deadline=None)
@given(angles)
def test_mirror_symmetry(q):
    g = hand_geometry(SK, q)
    m = hand_geometry(SK, mirror_angles(q))
    assert m[0] == pytest.approx(g[0], abs=1e-9) and m[1] == pytest.approx(g[1], abs=1e-9)
    assert m[2] == pytest.approx(g[3], abs=1e-9) and m[4] == pytest.approx(g[5], abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(angles, st.floats(0.5, 2.0))
def test_length_homogeneity(q, s):
    base = forward_kinematics(SK, q)
    scaled = forward_kinematics(SK.scaled(s), q)
    for side in ("left", "right"):
        for part in ("knee", "hip", "pelvis", "shoulder", "elbow", "hand", "head"):
            assert np.allclose(getattr(scaled[side], part), s * getattr(base[side], part),
                               atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(angles, angles, st.floats(0.01, 0.5))
def test_travel_ignores_common_vertical_offset(q0, q1, dz):
    raised = Skeleton(ankle_height=SK.ankle_height + dz)
    h, v, d = niosh_geometry(q0, q1, SK)
    h2, v2, d2 = niosh_geometry(q0, q1, raised)
    assert d2 == pytest.approx(d, abs=1e-9)
    assert v2 == pytest.approx(v + 100 * dz, abs=1e-9) and h2 == pytest.approx(h, abs=1e-9)


def test_same_origin_and_current_give_zero_travel(rng):
    q = rng.normal(size=31)
    f = StateFrame(0.0, q, np.zeros(31), np.zeros(12))
    assert niosh_geometry(f, f, SK)[2] == 0.0


def test_averaged_values_are_side_means(rng):
    q = rng.normal(size=31)
    g = geometry_snapshot(SK, q)
    assert g.H == pytest.approx((g.H_left + g.H_right) / 2) and g.H >= 0
    assert g.V == pytest.approx((g.V_left + g.V_right) / 2)


def test_scripted_pickup_posture_hits_table_origin(rng):
    base = rest_posture(rng, 0.0)
    knee = 1.75
    for side in ("left", "right"):
        base[ANGLE_INDEX[f"{side}_knee_flexion"]] = knee
        base[ANGLE_INDEX[f"{side}_ankle_flexion"]] = 0.35 * knee
    base[ANGLE_INDEX["l5s1_flexion"]] = base[ANGLE_INDEX["t9t8_flexion"]] = 0.2
    q = reach_posture(SK, base, 47.0, 8.0)
    g = geometry_snapshot(SK, q)
    for h in (g.H_left, g.H_right):
        assert h == pytest.approx(47.0, abs=1e-6)
    for v in (g.V_left, g.V_right):
        assert v == pytest.approx(8.0, abs=1e-6)


def test_batch_and_single_evaluation_agree_bitwise(rng):
    q = rng.normal(size=(20, 31))
    batch = hand_geometry(SK, q)
    for k in range(20):
        single = hand_geometry(SK, q[k])
        assert all(np.array_equal(b[k], s) for b, s in zip(batch, single))


def test_center_of_mass_over_feet_when_upright():
    com = center_of_mass(SK, rest_posture(np.random.default_rng(0), 0.0))
    assert abs(com[0]) < 0.05 and 0.8 < com[2] < 1.2
