"""Synthetic gait corpus: determinism, deviation injection semantics, and
cycle-structure agreement with the requested cadence."""

import numpy as np
import pytest

from gaitmae.errors import DataError
from gaitmae.gaitcycle import detect_cycles
from gaitmae.skeleton import (
    JID,
    JOINTS,
    LM,
    Trial,
    estimate_segment_lengths,
    extract_angle_sequence,
    interpolate_missing,
    pelvis_normalize,
)
from gaitmae.synthgait import (
    ANOMALY_KINDS,
    AnomalySpec,
    GaitGenConfig,
    config_as_dict,
    config_from_dict,
    corpus_manifest,
    generate_normative,
    inject_anomaly,
)

DEG = np.pi / 180.0


def _clean_cfg(**kw):
    base = dict(n_subjects=1, noise_sigma=0.0, dropout_prob=0.0,
                speeds={"normal": 1.0}, seed=0)
    base.update(kw)
    return GaitGenConfig(**base)


@pytest.fixture(scope="module")
def clean_trial():
    return generate_normative(_clean_cfg())[0]


def _angles(trial):
    a, _ = extract_angle_sequence(pelvis_normalize(trial.positions))
    return a


# -----------------------------------------------------------------------------
# Configuration and spec validation
# -----------------------------------------------------------------------------


def test_config_rejects_out_of_range():
    with pytest.raises(DataError):
        GaitGenConfig(speeds={"sprint": 2.5})
    with pytest.raises(DataError):
        GaitGenConfig(dropout_prob=1.5)
    with pytest.raises(DataError):
        GaitGenConfig(n_subjects=0)


def test_config_dict_roundtrip():
    cfg = GaitGenConfig(n_subjects=3, seed=9, fps=25.0)
    doc = config_as_dict(cfg)
    assert config_from_dict(doc) == cfg
    doc["no_such_field"] = 1
    with pytest.raises(DataError):
        config_from_dict(doc)


def test_anomaly_spec_validation():
    with pytest.raises(DataError):
        AnomalySpec("XX")
    with pytest.raises(DataError):
        AnomalySpec("CD", intensity=1.5)
    with pytest.raises(DataError):
        AnomalySpec("CD", side="up")
    assert AnomalySpec("CD", side="right").primary_joint() == "r_hip"
    assert AnomalySpec("HS", side="left").primary_joint() == "l_hip"
    assert AnomalySpec("HH").primary_joint() == "pelvis"
    assert AnomalySpec("TL").primary_joint() == "pelvis"


# -----------------------------------------------------------------------------
# Corpus generation
# -----------------------------------------------------------------------------


def test_generation_is_deterministic():
    cfg = GaitGenConfig(n_subjects=1, seed=7)
    a = generate_normative(cfg)
    b = generate_normative(GaitGenConfig(n_subjects=1, seed=7))
    assert len(a) == len(b) == 3
    for ta, tb in zip(a, b):
        # NaN dropouts make plain array_equal false; compare via bytes
        assert ta.positions.tobytes() == tb.positions.tobytes()
        assert np.array_equal(ta.times, tb.times)


def test_subjects_are_independent_of_corpus_size():
    small = generate_normative(GaitGenConfig(n_subjects=1, seed=7))
    big = generate_normative(GaitGenConfig(n_subjects=2, seed=7))
    for ta, tb in zip(small, big[:3]):
        assert ta.positions.tobytes() == tb.positions.tobytes()


def test_trial_metadata(clean_trial):
    t = clean_trial
    assert t.subject_id == "S000"
    assert t.condition == "normative"
    assert t.fps == 30.0
    assert np.allclose(np.diff(t.times), 1.0 / 30.0, atol=1e-12)
    cfg = _clean_cfg()
    expect_frames = int(round((cfg.stand_s * 2 + cfg.ramp_s * 2 + cfg.walk_s) * cfg.fps))
    assert t.n_frames == expect_frames
    assert t.source["generator"] == "synthgait"
    assert t.source["speed"] == "normal"


def test_clean_trial_is_grounded_and_stands_still(clean_trial):
    pos = clean_trial.positions
    heel_z = pos[:, [LM["l_heel"], LM["r_heel"]], 2]
    assert heel_z.min() == 0.0  # lowest heel sample defines the floor
    # stand phase: the first half second is a frozen pose
    assert np.abs(np.diff(pos[:15], axis=0)).max() == 0.0
    assert np.abs(np.diff(pos[-15:], axis=0)).max() == 0.0


def test_different_subjects_differ():
    cfg = GaitGenConfig(n_subjects=2, noise_sigma=0.0, dropout_prob=0.0,
                        speeds={"normal": 1.0}, seed=0)
    a, b = generate_normative(cfg)
    assert a.positions.shape == b.positions.shape
    assert np.abs(a.positions - b.positions).max() > 1e-3  # jittered profiles


def test_dropouts_match_configured_rate():
    cfg = GaitGenConfig(n_subjects=2, dropout_prob=0.05, seed=1)
    trials = generate_normative(cfg)
    rate = np.mean([np.isnan(t.positions[..., 0]).mean() for t in trials])
    assert abs(rate - 0.05) < 0.01


def test_corpus_manifest_summary():
    cfg = GaitGenConfig(n_subjects=2, seed=2)
    trials = generate_normative(cfg)
    man = corpus_manifest(trials)
    assert man["n_trials"] == 6
    assert man["subjects"] == ["S000", "S001"]
    assert man["conditions"] == ["normative"]
    assert {e["speed"] for e in man["trials"]} == {"slow", "normal", "fast"}


# -----------------------------------------------------------------------------
# Deviation injection
# -----------------------------------------------------------------------------


def test_zero_intensity_is_byte_identical(clean_trial):
    z = inject_anomaly(clean_trial, AnomalySpec("HS", 0.0))
    assert z.positions.tobytes() == clean_trial.positions.tobytes()
    assert z.condition == "HS"


def test_injection_reuses_noise_and_dropout_streams():
    trial = generate_normative(GaitGenConfig(n_subjects=1, seed=3))[1]
    anom = inject_anomaly(trial, AnomalySpec("HH"))
    assert np.array_equal(np.isnan(trial.positions), np.isnan(anom.positions))
    # untouched landmarks carry the *same* noise: left wrist stays close
    d = np.nanmax(np.abs(anom.positions[:, LM["l_wrist"]] -
                         trial.positions[:, LM["l_wrist"]]))
    assert d < 0.05


def test_injection_requires_generated_normative_trial(clean_trial):
    alien = Trial("X", "normative", 30.0, clean_trial.times.copy(),
                  clean_trial.positions.copy(), source=None)
    with pytest.raises(DataError):
        inject_anomaly(alien, AnomalySpec("CD"))
    once = inject_anomaly(clean_trial, AnomalySpec("CD"))
    with pytest.raises(DataError):
        inject_anomaly(once, AnomalySpec("HH"))


def test_all_kinds_annotate_source(clean_trial):
    for kind in ANOMALY_KINDS:
        t = inject_anomaly(clean_trial, AnomalySpec(kind, 0.6))
        assert t.condition == kind
        assert t.source["anomaly"]["intensity"] == 0.6
        assert t.source["anomaly"]["primary_joint"] == AnomalySpec(kind).primary_joint()


def test_hip_circumduction_confined_to_injected_leg(clean_trial):
    # deviation enters as an angle-space change before FK, so every joint
    # outside the affected chain must extract identically; within the chain
    # the hip shows the full added abduction at peak swing, and the distal
    # joints move only through the twist convention of the extractor
    anom = inject_anomaly(clean_trial, AnomalySpec("CD", 1.0, "right"))
    d = np.abs(_angles(anom) - _angles(clean_trial))
    per_joint = d.max(axis=(0, 2))
    chain = {JID["r_hip"], JID["r_knee"], JID["r_ankle"]}
    for j, name in enumerate(JOINTS):
        if j in chain:
            continue
        assert per_joint[j] < 1e-9, name
    hip_abd = d[:, JID["r_hip"], 0].max()
    assert abs(hip_abd - 18.0 * DEG) < 0.01 * DEG


def test_circumduction_scales_with_intensity(clean_trial):
    half = inject_anomaly(clean_trial, AnomalySpec("CD", 0.5, "right"))
    d = np.abs(_angles(half) - _angles(clean_trial))
    assert abs(d[:, JID["r_hip"], 0].max() - 9.0 * DEG) < 0.01 * DEG


def test_trunk_flexion_shifts_pelvis_pitch(clean_trial):
    anom = inject_anomaly(clean_trial, AnomalySpec("TF", 1.0))
    d = _angles(anom) - _angles(clean_trial)
    pitch = d[:, JID["pelvis"], 1]
    # exact +20 degrees while standing (no roll/yaw to couple through)
    assert abs(pitch.max() - 20.0 * DEG) < 0.01 * DEG
    assert pitch.min() > 18.0 * DEG  # never far off during walking either
    # all non-pelvis joints are bitwise-stable under a pure pelvis deviation
    others = np.delete(np.abs(d), JID["pelvis"], axis=1)
    assert others.max() < 1e-9
    # pelvis roll/yaw absorb a little of the re-yawed walking frames
    assert np.abs(d[:, JID["pelvis"], [0, 2]]).max() < 3.0 * DEG


def test_trunk_extension_is_opposite_sign(clean_trial):
    anom = inject_anomaly(clean_trial, AnomalySpec("TE", 1.0))
    pitch = (_angles(anom) - _angles(clean_trial))[:, JID["pelvis"], 1]
    assert abs(pitch.min() + 20.0 * DEG) < 0.01 * DEG


# -----------------------------------------------------------------------------
# Cycle structure
# -----------------------------------------------------------------------------


def test_cycle_counts_track_cadence():
    # full pipeline on a noisy corpus: dropouts filled, then heel-strike
    # counting; counts stay within one cycle of cadence * steady-walk time
    cfg = GaitGenConfig(n_subjects=2, seed=3)
    for trial in generate_normative(cfg):
        topo = estimate_segment_lengths(trial)
        fixed = interpolate_missing(trial, topo)
        bounds = detect_cycles(fixed.positions[:, LM["l_heel"], 2], fps=trial.fps)
        expected = cfg.speeds[trial.source["speed"]] * cfg.walk_s
        assert abs(bounds.n_cycles - expected) <= 1.0, trial.source["speed"]


def test_festinating_gait_raises_cadence(clean_trial):
    anom = inject_anomaly(clean_trial, AnomalySpec("GG", 1.0))
    n_norm = detect_cycles(clean_trial.positions[:, LM["l_heel"], 2], fps=30.0).n_cycles
    n_anom = detect_cycles(anom.positions[:, LM["l_heel"], 2], fps=30.0).n_cycles
    assert n_anom > n_norm
    assert abs(n_anom - 1.2 * 7.0) <= 1.0
