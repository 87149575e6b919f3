"""Skeleton model: segment lengths, constraint projections, interpolation,
normalization, angle extraction and forward kinematics."""

import numpy as np
import pytest

from gaitmae.errors import DataError, DegenerateFrameError, UnrecoverableLandmarkError
from gaitmae.skeleton import (
    JOINTS,
    JID,
    LANDMARKS,
    LM,
    N_JOINTS,
    N_LANDMARKS,
    REST_LENGTH,
    Trial,
    default_topology,
    estimate_floor,
    estimate_segment_lengths,
    extract_angles,
    extract_angle_sequence,
    fk_joint_subset,
    forward_kinematics,
    forward_kinematics_landmarks,
    ground_contact_clamp,
    interpolate_missing,
    pelvis_normalize,
    project_bone_length,
    project_two_sphere,
)


def _rest_frame():
    return forward_kinematics_landmarks(np.zeros((N_JOINTS, 3)), default_topology())


def _trial_from_positions(pos, fps=30.0):
    n = pos.shape[0]
    return Trial("S000", "normative", fps, np.arange(n) / fps, pos.copy())


def _walking_like_trial(n=120, seed=0):
    """Rigid FK positions along a small smooth pose orbit, plus translation."""
    rng = np.random.default_rng(seed)
    topo = default_topology()
    t = np.arange(n) / 30.0
    base = rng.normal(0.0, 0.15, size=(N_JOINTS, 3))
    wob = 0.2 * np.sin(2 * np.pi * 1.0 * t)[:, None, None]
    angles = base[None] * (1.0 + wob)
    pos = forward_kinematics_landmarks(angles, topo)
    pos = pos + np.stack([0.8 * t, np.zeros(n), np.full(n, 0.9)], axis=1)[:, None, :]
    return _trial_from_positions(pos), topo


# -----------------------------------------------------------------------------
# Segment lengths
# -----------------------------------------------------------------------------


def test_segment_lengths_exact_on_rigid_data():
    trial, _ = _walking_like_trial()
    topo = estimate_segment_lengths(trial)
    for child, ref in REST_LENGTH.items():
        assert topo.lengths[child] == pytest.approx(ref, abs=1e-9)


def test_segment_lengths_median_robust_to_outlier():
    trial, _ = _walking_like_trial()
    trial.positions[5, LM["l_wrist"]] += 3.0  # one wild frame
    topo = estimate_segment_lengths(trial)
    assert topo.lengths["l_wrist"] == pytest.approx(REST_LENGTH["l_wrist"], abs=1e-9)


def test_segment_lengths_noisy_within_2mm():
    trial, _ = _walking_like_trial(n=100, seed=1)
    rng = np.random.default_rng(2)
    trial.positions += rng.normal(0.0, 0.005, size=trial.positions.shape)
    topo = estimate_segment_lengths(trial)
    # thigh bone with 5 mm endpoint noise: median estimate within 2 mm
    assert abs(topo.lengths["r_knee"] - REST_LENGTH["r_knee"]) < 0.002


def test_segment_lengths_insufficient_names_bone():
    trial, _ = _walking_like_trial(n=30)
    trial.positions[5:, LM["r_toe"]] = np.nan  # 5 usable frames left
    with pytest.raises(DataError, match="r_toe"):
        estimate_segment_lengths(trial)


# -----------------------------------------------------------------------------
# Constraint projections
# -----------------------------------------------------------------------------


def test_project_bone_length_basic_and_idempotent():
    parent = np.array([1.0, 2.0, 3.0])
    p = project_bone_length(np.array([1.0, 2.0, 5.5]), parent, 0.4)
    assert np.linalg.norm(p - parent) == pytest.approx(0.4, abs=1e-12)
    p2 = project_bone_length(p, parent, 0.4)
    assert np.abs(p2 - p).max() < 1e-12


def test_project_bone_length_degenerate():
    with pytest.raises(DegenerateFrameError):
        project_bone_length(np.ones(3), np.ones(3), 0.4)


def test_project_two_sphere_intersecting():
    a = np.zeros(3)
    b = np.array([1.0, 0.0, 0.0])
    p = project_two_sphere(np.array([0.4, 0.9, 0.2]), a, 0.7, b, 0.7)
    assert np.linalg.norm(p - a) == pytest.approx(0.7, abs=1e-12)
    assert np.linalg.norm(p - b) == pytest.approx(0.7, abs=1e-12)
    again = project_two_sphere(p, a, 0.7, b, 0.7)
    assert np.abs(again - p).max() < 1e-12


def test_project_two_sphere_separated_equal_violation():
    a = np.zeros(3)
    b = np.array([2.0, 0.0, 0.0])
    p = project_two_sphere(np.array([0.3, 0.5, 0.0]), a, 0.5, b, 0.5)
    # spheres cannot touch: collapses onto the center axis, violating both
    # lengths equally
    assert np.allclose(p, [1.0, 0.0, 0.0], atol=1e-12)
    va = abs(np.linalg.norm(p - a) - 0.5)
    vb = abs(np.linalg.norm(p - b) - 0.5)
    assert va == pytest.approx(vb, abs=1e-12)


def test_project_two_sphere_on_axis_is_deterministic():
    a = np.zeros(3)
    b = np.array([1.0, 0.0, 0.0])
    p1 = project_two_sphere(np.array([0.5, 0.0, 0.0]), a, 0.8, b, 0.8)
    p2 = project_two_sphere(np.array([0.5, 0.0, 0.0]), a, 0.8, b, 0.8)
    assert np.array_equal(p1, p2)
    assert np.linalg.norm(p1 - a) == pytest.approx(0.8, abs=1e-12)


def test_project_two_sphere_concentric_raises():
    with pytest.raises(DegenerateFrameError):
        project_two_sphere(np.ones(3), np.zeros(3), 0.5, np.zeros(3), 0.6)


# -----------------------------------------------------------------------------
# Floor and clamp
# -----------------------------------------------------------------------------


def test_floor_and_ground_clamp():
    trial, _ = _walking_like_trial()
    trial.positions[:, :, 2] += 1.0
    feet = [LM[n] for n in ("l_heel", "r_heel", "l_toe", "r_toe")]
    floor = estimate_floor(trial)
    trial.positions[3, LM["l_heel"], 2] = floor - 0.05
    out = ground_contact_clamp(trial, floor)
    assert out.positions[3, LM["l_heel"], 2] == floor
    z = out.positions[:, feet, 2]
    assert np.nanmin(z) >= floor - 1e-12
    # non-foot landmarks untouched
    others = [i for i in range(N_LANDMARKS) if i not in feet]
    assert np.array_equal(out.positions[:, others], trial.positions[:, others])


def test_estimate_floor_no_heels_raises():
    trial, _ = _walking_like_trial(n=30)
    trial.positions[:, [LM["l_heel"], LM["r_heel"]]] = np.nan
    with pytest.raises(DataError):
        estimate_floor(trial)


# -----------------------------------------------------------------------------
# Missing-sample interpolation
# -----------------------------------------------------------------------------


def test_interpolate_never_touches_observed_samples():
    trial, topo = _walking_like_trial(seed=3)
    rng = np.random.default_rng(4)
    gone = rng.random(trial.positions.shape[:2]) < 0.05
    trial.positions[gone] = np.nan
    out = interpolate_missing(trial, topo)
    kept = ~gone
    assert np.array_equal(out.positions[kept], trial.positions[kept])
    assert np.isfinite(out.positions).all()


def test_interpolated_samples_satisfy_bone_lengths():
    trial, topo = _walking_like_trial(seed=5)
    holes = [(10, "l_wrist"), (20, "r_ankle"), (40, "neck"), (41, "neck"), (60, "l_toe")]
    for r, name in holes:
        trial.positions[r, LM[name]] = np.nan
    out = interpolate_missing(trial, topo)
    from gaitmae.skeleton import LANDMARK_PARENT

    for r, name in holes:
        parent = LANDMARK_PARENT[name]
        d = np.linalg.norm(out.positions[r, LM[name]] - out.positions[r, LM[parent]])
        assert d == pytest.approx(topo.lengths[name], abs=1e-9)


def test_interpolated_knee_lands_on_two_sphere_circle():
    trial, topo = _walking_like_trial(seed=6)
    trial.positions[33, LM["r_knee"]] = np.nan
    out = interpolate_missing(trial, topo)
    knee = out.positions[33, LM["r_knee"]]
    hip = out.positions[33, LM["r_hip"]]
    ankle = out.positions[33, LM["r_ankle"]]
    assert np.linalg.norm(knee - hip) == pytest.approx(topo.lengths["r_knee"], abs=1e-9)
    assert np.linalg.norm(ankle - knee) == pytest.approx(topo.lengths["r_ankle"], abs=1e-9)


def test_short_gap_fill_tracks_true_path():
    trial, topo = _walking_like_trial(seed=7)
    truth = trial.positions[50:53, LM["l_elbow"]].copy()
    trial.positions[50:53, LM["l_elbow"]] = np.nan
    out = interpolate_missing(trial, topo)
    err = np.linalg.norm(out.positions[50:53, LM["l_elbow"]] - truth, axis=1)
    assert err.max() < 0.02  # 3-frame gap on a smooth path


def test_fully_missing_landmark_is_unrecoverable():
    trial, topo = _walking_like_trial(n=40)
    trial.positions[:, LM["r_heel"]] = np.nan
    with pytest.raises(UnrecoverableLandmarkError):
        interpolate_missing(trial, topo)


def test_leading_gap_extrapolates_with_edge_velocity():
    trial, topo = _walking_like_trial(seed=8)
    pos = trial.positions
    pos[:4, LM["nose"]] = np.nan
    out = interpolate_missing(trial, topo)
    # filled head continues the first observed chord, then gets projected;
    # it must at least stay near the moving skeleton, not at the origin
    d = np.linalg.norm(out.positions[0, LM["nose"]] - out.positions[0, LM["neck"]])
    assert d == pytest.approx(topo.lengths["nose"], abs=1e-9)


# -----------------------------------------------------------------------------
# Pelvis normalization
# -----------------------------------------------------------------------------


def test_pelvis_normalize_origin_and_hip_axis():
    trial, _ = _walking_like_trial(seed=9)
    out = pelvis_normalize(trial.positions)
    assert np.abs(out[:, LM["pelvis"]]).max() < 1e-12
    h = out[:, LM["l_hip"]] - out[:, LM["r_hip"]]
    assert np.abs(h[:, 0]).max() < 1e-9      # horizontal part fully on +y
    assert (h[:, 1] > 0).all()


def test_pelvis_normalize_invariant_to_rigid_motion():
    trial, _ = _walking_like_trial(seed=10)
    base = pelvis_normalize(trial.positions)
    ang = 1.1
    rz = np.array([[np.cos(ang), -np.sin(ang), 0.0],
                   [np.sin(ang), np.cos(ang), 0.0],
                   [0.0, 0.0, 1.0]])
    moved = trial.positions @ rz.T + np.array([5.0, -2.0, 0.7])
    assert np.abs(pelvis_normalize(moved) - base).max() < 1e-9


def test_pelvis_normalize_preserves_z_differences():
    trial, _ = _walking_like_trial(seed=11)
    out = pelvis_normalize(trial.positions)
    dz_in = trial.positions[:, :, 2] - trial.positions[:, LM["pelvis"], 2][:, None]
    assert np.abs(out[:, :, 2] - dz_in).max() < 1e-9


def test_pelvis_normalize_vertical_hip_axis_degenerate():
    frame = _rest_frame()
    frame[LM["l_hip"]] = frame[LM["pelvis"]] + [0.0, 0.0, 0.1]
    frame[LM["r_hip"]] = frame[LM["pelvis"]] - [0.0, 0.0, 0.1]
    with pytest.raises(DegenerateFrameError):
        pelvis_normalize(frame)


# -----------------------------------------------------------------------------
# Angle extraction and FK
# -----------------------------------------------------------------------------


def test_rest_pose_extracts_to_zero():
    pose = extract_angles(_rest_frame())
    assert np.abs(pose.angles).max() < 1e-9
    assert not pose.gimbal.any()


def test_single_joint_rotation_recovered():
    topo = default_topology()
    angles = np.zeros((N_JOINTS, 3))
    angles[JID["r_elbow"], 0] = np.pi / 6
    frame = forward_kinematics_landmarks(angles, topo)
    pose = extract_angles(frame, topo)
    assert pose.angles[JID["r_elbow"], 0] == pytest.approx(np.pi / 6, abs=1e-9)
    off = pose.angles.copy()
    off[JID["r_elbow"], 0] = 0.0
    assert np.abs(off).max() < 1e-9


def test_fk_zero_pose_is_rest_and_lengths_match():
    topo = default_topology()
    lm = forward_kinematics_landmarks(np.zeros((N_JOINTS, 3)), topo)
    from gaitmae.skeleton import LANDMARK_PARENT

    for child, parent in LANDMARK_PARENT.items():
        d = np.linalg.norm(lm[LM[child]] - lm[LM[parent]])
        assert d == pytest.approx(topo.lengths[child], abs=1e-12)
    assert np.abs(lm[LM["pelvis"]]).max() == 0.0


def test_fk_scales_linearly_with_lengths():
    topo = default_topology()
    doubled = default_topology()
    doubled.lengths = {k: 2.0 * v for k, v in topo.lengths.items()}
    rng = np.random.default_rng(12)
    pose = rng.normal(0.0, 0.4, size=(N_JOINTS, 3))
    assert np.allclose(forward_kinematics(pose, doubled),
                       2.0 * forward_kinematics(pose, topo), atol=1e-12)


def test_fk_batch_matches_loop():
    topo = default_topology()
    rng = np.random.default_rng(13)
    poses = rng.normal(0.0, 0.5, size=(6, N_JOINTS, 3))
    batch = forward_kinematics_landmarks(poses, topo)
    for i in range(6):
        assert np.allclose(batch[i], forward_kinematics_landmarks(poses[i], topo),
                           atol=1e-12)


def test_roundtrip_on_constraint_satisfying_frames():
    # FK of an arbitrary pose is NOT generally reproducible (a twist the
    # landmarks cannot witness, e.g. head yaw, is resolved by convention).
    # One extract+FK pass projects onto the representable family; on that
    # family the roundtrip is exact.
    topo = default_topology()
    rng = np.random.default_rng(14)
    worst = 0.0
    for _ in range(100):
        seed_pose = rng.normal(0.0, 0.7, size=(N_JOINTS, 3))
        frame = forward_kinematics_landmarks(seed_pose, topo)
        frame = forward_kinematics_landmarks(extract_angles(frame, topo).angles, topo)
        back = forward_kinematics_landmarks(extract_angles(frame, topo).angles, topo)
        worst = max(worst, float(np.abs(back - frame).max()))
    assert worst < 1e-6


def test_unprojected_random_pose_roundtrip_fails_only_at_head():
    # documents the one unobservable direction: everything except the nose
    # is pinned by landmark directions even for arbitrary poses
    topo = default_topology()
    rng = np.random.default_rng(15)
    pose = rng.normal(0.0, 0.5, size=(N_JOINTS, 3))
    frame = forward_kinematics_landmarks(pose, topo)
    back = forward_kinematics_landmarks(extract_angles(frame, topo).angles, topo)
    err = np.linalg.norm(back - frame, axis=1)
    body = [i for i, n in enumerate(LANDMARKS) if n != "nose"]
    assert err[body].max() < 1e-9


def test_extract_requires_joint_landmarks():
    frame = _rest_frame()
    frame[LM["l_knee"]] = np.nan
    with pytest.raises(DataError, match="l_knee"):
        extract_angles(frame)


def test_extract_tolerates_missing_decoration():
    frame = _rest_frame()
    frame[LM["l_wrist"]] = np.nan
    frame[[LM["r_toe"], LM["r_heel"]]] = np.nan
    pose = extract_angles(frame)
    # elbows/ankles without their decoration landmarks inherit the parent
    # frame => zero relative rotation, but extraction succeeds
    assert np.abs(pose.angles[JID["l_elbow"]]).max() < 1e-9
    assert np.abs(pose.angles[JID["r_ankle"]]).max() < 1e-9


def test_extract_angle_sequence_shapes_and_gimbal():
    topo = default_topology()
    rng = np.random.default_rng(16)
    poses = rng.normal(0.0, 0.3, size=(5, N_JOINTS, 3))
    frames = forward_kinematics_landmarks(poses, topo)
    angles, gimbal = extract_angle_sequence(frames, topo)
    assert angles.shape == (5, N_JOINTS, 3)
    assert gimbal.shape == (5, N_JOINTS)
    assert gimbal.dtype == bool


def test_fk_joint_subset_orders_rows_like_joints():
    frame = _rest_frame()
    sub = fk_joint_subset(frame)
    assert sub.shape == (N_JOINTS, 3)
    for j in JOINTS:
        assert np.array_equal(sub[JID[j]], frame[LM[j]])
