"""Synthetic gait corpus: normative trials plus seven injected deviations.

Joint-angle trajectories are 3-harmonic Fourier series per joint axis
(hand-tuned to resemble textbook sagittal gait curves), jittered per
subject, driven through a stand-walk-stand envelope and forward kinematics
to 19 landmarks, then corrupted with sensor noise and dropouts.

Deviations are injected in angle space *before* FK and before noise, and
the noise/dropout streams are keyed by (seed, subject, speed, trial) alone
— an injected trial therefore differs from its normative source only in
the perturbed joints' angle channels, never in the corruption pattern.

Not a validated gait simulator: curve shapes and magnitudes are config.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError
from .skeleton import (
    JID,
    LANDMARK_PARENT,
    LM,
    N_JOINTS,
    REST_LENGTH,
    SkeletonTopology,
    Trial,
    forward_kinematics_landmarks,
)

DEG = np.pi / 180.0

# Canonical per-axis curves: {joint: {axis: (mean_deg, ((a1,b1),(a2,b2),(a3,b3)))}}
# for the right side and midline; phase 0 is right heel strike. Left-side
# joints reuse the curve half a cycle later with x/z channels mirrored.
DEFAULT_TEMPLATE = {
    "pelvis": {
        "x": (0.0, ((-2.90, -1.78), (0.0, 0.0), (0.0, 0.0))),   # obliquity
        "y": (1.0, ((0.0, 0.0), (1.0, 0.0), (0.0, 0.0))),       # tilt, 2/cycle
        "z": (0.0, ((4.0, 0.0), (0.0, 0.0), (0.0, 0.0))),       # rotation
    },
    "r_hip": {
        "x": (0.12, ((0.70, 4.22), (0.92, 0.61), (0.26, 0.02))),
        "y": (-12.0, ((-16.5, 7.04), (4.85, -0.54), (-1.16, -1.23))),
    },
    "r_knee": {
        "y": (26.8, ((1.76, -22.18), (-9.25, 4.48), (-1.58, 0.37))),
    },
    "r_ankle": {
        "y": (1.39, ((-5.39, -2.53), (2.26, 4.56), (-0.43, 1.59))),
    },
    "r_shoulder": {
        "y": (0.0, ((12.0, 0.0), (0.0, 0.0), (0.0, 0.0))),
    },
    "r_elbow": {
        "y": (-25.5, ((6.0, 0.0), (0.0, 0.0), (0.0, 0.0))),
    },
    "neck": {
        "y": (0.0, ((0.5, 0.0), (0.0, 0.0), (0.0, 0.0))),
    },
}

ANOMALY_KINDS = ("CD", "HH", "HS", "GG", "TE", "TF", "TL")

# Deviation magnitudes at intensity 1 (degrees, or unitless scale factors).
ANOMALY_MAGNITUDES = {
    "CD": {"hip_abd": 18.0},
    "HH": {"pelvis_obliquity": 10.0, "hip_abd": 8.0},
    "HS": {"hip_flex": 18.0, "knee_flex": 25.0},
    "GG": {"amp_scale": 0.35, "cadence_scale": 0.20, "stance_width": 7.0,
           "stoop": 10.0},
    "TE": {"pitch": -20.0},
    "TF": {"pitch": 20.0},
    "TL": {"pelvis_roll": 12.0},
}

# The joint each deviation most directly corrupts ("{side}" resolved at
# injection time); used as localization ground truth by the evaluation.
ANOMALY_PRIMARY_JOINT = {
    "CD": "{side}_hip",
    "HH": "pelvis",
    "HS": "{side}_hip",
    "GG": "pelvis",
    "TE": "pelvis",
    "TF": "pelvis",
    "TL": "pelvis",
}

_TAG_PROFILE = 101   # per-subject template jitter + anthropometry
_TAG_NOISE = 202     # per-trial sensor noise
_TAG_DROPOUT = 303   # per-trial landmark dropouts


@dataclass
class GaitGenConfig:
    n_subjects: int = 40
    trials_per_speed: int = 1
    speeds: dict = field(default_factory=lambda: {"slow": 0.85, "normal": 1.0,
                                                  "fast": 1.15})
    harmonics: int = 3
    amp_jitter: float = 0.06       # relative sd of per-curve amplitude factor
    phase_jitter: float = 0.02     # sd (rad) of per-joint phase shift
    mean_jitter_deg: float = 0.7   # sd of per-curve mean offset
    anthro_jitter: float = 0.04    # relative sd of segment lengths
    noise_sigma: float = 0.0005    # sensor noise sd per coordinate (m)
    noise_corr_s: float = 0.25     # noise low-pass width (s); 0 = white noise
    dropout_prob: float = 0.02     # per-(frame, landmark) missing probability
    fps: float = 30.0
    stand_s: float = 1.5
    ramp_s: float = 0.7
    walk_s: float = 7.0
    sway_m: float = 0.02           # lateral pelvis excursion, 1/cycle
    seed: int = 0
    template: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_TEMPLATE))

    def __post_init__(self):
        for name, hz in self.speeds.items():
            if not 0.5 <= hz <= 1.5:
                raise DataError(f"speed {name!r}: cadence {hz} Hz outside [0.5, 1.5]")
        for fname in ("dropout_prob", "amp_jitter"):
            v = getattr(self, fname)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{fname} must be in [0, 1], got {v}")
        if self.n_subjects < 1 or self.trials_per_speed < 1:
            raise DataError("need at least one subject and one trial per speed")


@dataclass
class AnomalySpec:
    kind: str
    intensity: float = 1.0
    side: str = "right"

    def __post_init__(self):
        if self.kind not in ANOMALY_KINDS:
            raise DataError(
                f"unknown deviation kind {self.kind!r}; expected one of {ANOMALY_KINDS}"
            )
        if not 0.0 <= self.intensity <= 1.0:
            raise DataError(f"intensity must be in [0, 1], got {self.intensity}")
        if self.side not in ("left", "right"):
            raise DataError(f"side must be 'left' or 'right', got {self.side!r}")

    def primary_joint(self) -> str:
        return ANOMALY_PRIMARY_JOINT[self.kind].format(side=self.side[0])


# =============================================================================
# Subject profiles and curve evaluation
# =============================================================================


def _rng(cfg: GaitGenConfig, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((cfg.seed,) + key))


def _subject_profile(cfg: GaitGenConfig, subject: int) -> dict:
    """Deterministic per-subject anthropometry and template jitter.

    Draws are clipped at ±2σ: unbounded tails occasionally produce subjects
    whose heel trajectory stops looking like walking at all (e.g. a 3σ-weak
    knee never clears the heel-off bump), which no real cohort exhibits.
    """
    rng = _rng(cfg, subject, _TAG_PROFILE)

    def draw(scale):
        return scale * float(np.clip(rng.standard_normal(), -2.0, 2.0))

    height_scale = 1.0 + draw(cfg.anthro_jitter)
    lengths = {}
    seg_factor = {}
    for child in sorted(REST_LENGTH):
        # mirror-symmetric segment jitter: l_/r_ pairs share one factor
        stem = child[2:] if child[:2] in ("l_", "r_") else child
        if stem not in seg_factor:
            seg_factor[stem] = 1.0 + draw(0.5 * cfg.anthro_jitter)
        lengths[child] = REST_LENGTH[child] * height_scale * seg_factor[stem]
    amp = {}
    mean_off = {}
    phase = {}
    for joint in sorted(cfg.template):
        phase[joint] = draw(cfg.phase_jitter)
        for axis in sorted(cfg.template[joint]):
            amp[(joint, axis)] = 1.0 + draw(cfg.amp_jitter)
            mean_off[(joint, axis)] = draw(cfg.mean_jitter_deg)
    return {"lengths": lengths, "amp": amp, "mean_off": mean_off, "phase": phase,
            "height_scale": height_scale}


_AXIS_IDX = {"x": 0, "y": 1, "z": 2}


def _eval_curve(mean_deg, harm, phi, amp_factor, mean_extra_deg, phase_shift,
                envelope, amp_scale):
    """One joint-axis angle series (radians); oscillation gated by envelope."""
    osc = np.zeros_like(phi)
    for h, (a, b) in enumerate(harm, start=1):
        arg = h * (phi + phase_shift)
        osc += a * np.cos(arg) + b * np.sin(arg)
    total_deg = envelope * amp_scale * (amp_factor * osc + mean_deg + mean_extra_deg)
    return total_deg * DEG


def _template_angles(cfg, profile, phi, envelope, amp_scale=1.0) -> np.ndarray:
    """Evaluate the full (N, 12, 3) angle series from the canonical template.

    Left-side joints reuse the right-side curve at phi + pi with the x/z
    channels sign-flipped (mirror through the sagittal plane).
    """
    n = phi.shape[0]
    angles = np.zeros((n, N_JOINTS, 3))
    for joint, axes in cfg.template.items():
        for axis, (mean_deg, harm) in axes.items():
            a = _AXIS_IDX[axis]
            series = _eval_curve(mean_deg, harm, phi, profile["amp"][(joint, axis)],
                                 profile["mean_off"][(joint, axis)],
                                 profile["phase"][joint], envelope, amp_scale)
            if joint.startswith("r_"):
                partner = "l_" + joint[2:]
                sgn = -1.0 if axis in ("x", "z") else 1.0
                series_l = _eval_curve(sgn * mean_deg,
                                       [(sgn * c, sgn * s) for c, s in harm],
                                       phi + np.pi,
                                       profile["amp"][(joint, axis)],
                                       sgn * profile["mean_off"][(joint, axis)],
                                       profile["phase"][joint], envelope, amp_scale)
                angles[:, JID[joint], a] += series
                angles[:, JID[partner], a] += series_l
            else:
                angles[:, JID[joint], a] += series
    return angles


# =============================================================================
# Envelope, phase, and world trajectory
# =============================================================================


def _envelope(cfg: GaitGenConfig) -> tuple[np.ndarray, np.ndarray]:
    """(times, e): stand -> cosine ramp up -> walk -> ramp down -> stand."""
    total = 2.0 * cfg.stand_s + 2.0 * cfg.ramp_s + cfg.walk_s
    n = int(round(total * cfg.fps))
    t = np.arange(n) / cfg.fps
    e = np.zeros(n)
    t1 = cfg.stand_s
    t2 = t1 + cfg.ramp_s
    t3 = t2 + cfg.walk_s
    t4 = t3 + cfg.ramp_s
    up = (t >= t1) & (t < t2)
    e[up] = 0.5 * (1.0 - np.cos(np.pi * (t[up] - t1) / cfg.ramp_s))
    e[(t >= t2) & (t < t3)] = 1.0
    down = (t >= t3) & (t < t4)
    e[down] = 0.5 * (1.0 + np.cos(np.pi * (t[down] - t3) / cfg.ramp_s))
    return t, e


def _phase(e: np.ndarray, cadence: float, fps: float) -> np.ndarray:
    """Gait phase advances only while the envelope is open."""
    return 2.0 * np.pi * cadence * np.cumsum(e) / fps


def _walking_speed(cfg, profile, cadence, amp_scale=1.0) -> float:
    """Speed making the stance heel world-stationary, from one steady cycle."""
    m = 240
    u = np.arange(m) / m
    phi = 2.0 * np.pi * u
    ones = np.ones(m)
    angles = _template_angles(cfg, profile, phi, ones, amp_scale)
    topo = SkeletonTopology(lengths=dict(profile["lengths"]))
    pos = forward_kinematics_landmarks(angles, topo)
    heel_x = pos[:, LM["r_heel"], 0]
    dxdu = np.gradient(heel_x, u, edge_order=2)
    # foot-flat portion only: after the strike transient, before heel-off
    stance = (u >= 0.08) & (u <= 0.38)
    return max(-float(np.mean(dxdu[stance])) * cadence, 0.1)


_FOOT_COLS = None


def _support_height(local_pos: np.ndarray, fps: float) -> np.ndarray:
    """Per-frame pelvis height pinning the lowest foot point to the floor.

    The pelvis rides at minus the support foot's pelvis-relative height
    (lightly smoothed), which reproduces the inverted-pendulum rise and
    fall of real walking and plants the stance heel instead of letting it
    hover: the swing heel then traces a single clean arc per cycle.
    """
    global _FOOT_COLS
    if _FOOT_COLS is None:
        _FOOT_COLS = [LM[n] for n in ("l_heel", "r_heel", "l_toe", "r_toe")]
    h = -local_pos[:, _FOOT_COLS, 2].min(axis=1)
    k = max(int(round(0.15 * fps)) | 1, 3)
    pad = k // 2
    padded = np.pad(h, pad, mode="edge")
    return np.convolve(padded, np.ones(k) / k, mode="valid")


def _world_trajectory(cfg, e, phi, speed, height):
    """(N, 3) pelvis path: steady advance, support-pinned height, lateral sway."""
    x = speed * np.cumsum(e) / cfg.fps
    y = cfg.sway_m * e * np.sin(phi)
    return np.stack([x, y, height], axis=1)


# =============================================================================
# Deviation injection (angle space, pre-FK)
# =============================================================================


def _swing_window(phi: np.ndarray, side: str) -> np.ndarray:
    """Smooth bump over the given leg's swing (~60-100% of its own cycle)."""
    u = np.mod(phi / (2.0 * np.pi) + (0.5 if side == "left" else 0.0), 1.0)
    w = np.zeros_like(u)
    m = u >= 0.6
    w[m] = np.sin(np.pi * (u[m] - 0.6) / 0.4) ** 2
    return w


def _stance_window(phi: np.ndarray, side: str) -> np.ndarray:
    """Smooth bump over the given leg's stance (~0-60% of its own cycle)."""
    u = np.mod(phi / (2.0 * np.pi) + (0.5 if side == "left" else 0.0), 1.0)
    w = np.zeros_like(u)
    m = u < 0.6
    w[m] = np.sin(np.pi * u[m] / 0.6) ** 2
    return w


def _apply_deviation(angles, spec: AnomalySpec, phi, e):
    """Add the kind-specific angle perturbation in place.

    Gait-phase-locked components are gated by the envelope (they describe
    walking compensations); postural pitch offsets persist through stands.
    Sign conventions: x rotations move a hanging bone toward +y (the left),
    y rotations pitch +z toward +x (forward); right-leg abduction and
    forward trunk lean are -x and +y respectively.
    """
    mag = ANOMALY_MAGNITUDES[spec.kind]
    i = spec.intensity
    side = spec.side
    hip = JID[f"{side[0]}_hip"]
    knee = JID[f"{side[0]}_knee"]
    pelvis = JID["pelvis"]
    abd_sign = -1.0 if side == "right" else 1.0
    if spec.kind == "CD":
        w = _swing_window(phi, side) * e
        angles[:, hip, 0] += abd_sign * mag["hip_abd"] * DEG * i * w
    elif spec.kind == "HH":
        w = _swing_window(phi, side) * e
        angles[:, pelvis, 0] += abd_sign * mag["pelvis_obliquity"] * DEG * i * w
        angles[:, hip, 0] += abd_sign * mag["hip_abd"] * DEG * i * w
    elif spec.kind == "HS":
        w = _swing_window(phi, side) * e
        angles[:, hip, 1] -= mag["hip_flex"] * DEG * i * w
        angles[:, knee, 1] += mag["knee_flex"] * DEG * i * w
    elif spec.kind == "GG":
        angles[:, JID["r_hip"], 0] -= mag["stance_width"] * DEG * i * e
        angles[:, JID["l_hip"], 0] += mag["stance_width"] * DEG * i * e
        angles[:, pelvis, 1] += mag["stoop"] * DEG * i
    elif spec.kind in ("TE", "TF"):
        angles[:, pelvis, 1] += mag["pitch"] * DEG * i
    elif spec.kind == "TL":
        w = _stance_window(phi, side) * e
        angles[:, pelvis, 0] += abd_sign * mag["pelvis_roll"] * DEG * i * w
    return angles


# =============================================================================
# Trial realization
# =============================================================================


def _sensor_noise(cfg: GaitGenConfig, rng: np.random.Generator, shape) -> np.ndarray:
    """Temporally correlated landmark noise, sd ``noise_sigma`` per coordinate.

    Markerless pose estimators smooth over frames, so their error drifts
    rather than flickering; white noise convolved with a Hann window of
    ``noise_corr_s`` seconds (then rescaled to unit variance) mimics that.
    """
    if cfg.noise_sigma <= 0.0:
        return np.zeros(shape)
    k = int(round(cfg.noise_corr_s * cfg.fps))
    if k < 2:
        return cfg.noise_sigma * rng.standard_normal(shape)
    win = np.hanning(k + 2)[1:-1]
    win = win / np.sqrt((win ** 2).sum())
    n = shape[0]
    white = rng.standard_normal((n + k - 1,) + shape[1:])
    out = np.empty(shape)
    flat_w = white.reshape(n + k - 1, -1)
    flat_o = out.reshape(n, -1)
    for c in range(flat_w.shape[1]):
        flat_o[:, c] = np.convolve(flat_w[:, c], win, mode="valid")
    return cfg.noise_sigma * out


def _realize(cfg: GaitGenConfig, subject: int, speed_name: str, trial_idx: int,
             spec: AnomalySpec | None = None) -> Trial:
    profile = _subject_profile(cfg, subject)
    cadence = cfg.speeds[speed_name]
    amp_scale = 1.0
    if spec is not None and spec.kind == "GG":
        mag = ANOMALY_MAGNITUDES["GG"]
        cadence = cadence * (1.0 + mag["cadence_scale"] * spec.intensity)
        amp_scale = 1.0 - mag["amp_scale"] * spec.intensity
    times, e = _envelope(cfg)
    phi = _phase(e, cadence, cfg.fps)
    angles = _template_angles(cfg, profile, phi, e, amp_scale)
    if spec is not None:
        _apply_deviation(angles, spec, phi, e)
    speed = _walking_speed(cfg, profile, cadence, amp_scale)
    topo = SkeletonTopology(lengths=dict(profile["lengths"]))
    pos = forward_kinematics_landmarks(angles, topo)
    height = _support_height(pos, cfg.fps)
    pos = pos + _world_trajectory(cfg, e, phi, speed, height)[:, None, :]
    # ground the trial exactly: lowest clean heel sample defines z = 0
    heel_min = pos[:, [LM["l_heel"], LM["r_heel"]], 2].min()
    pos[..., 2] -= heel_min

    speed_idx = sorted(cfg.speeds).index(speed_name)
    noise_rng = _rng(cfg, subject, speed_idx, trial_idx, _TAG_NOISE)
    drop_rng = _rng(cfg, subject, speed_idx, trial_idx, _TAG_DROPOUT)
    pos = pos + _sensor_noise(cfg, noise_rng, pos.shape)
    if cfg.dropout_prob > 0.0:
        gone = drop_rng.random(pos.shape[:2]) < cfg.dropout_prob
        pos[gone] = np.nan

    condition = "normative" if spec is None else spec.kind
    source = {
        "generator": "synthgait",
        "config": config_as_dict(cfg),
        "subject": subject,
        "speed": speed_name,
        "trial": trial_idx,
    }
    if spec is not None:
        source["anomaly"] = {"kind": spec.kind, "intensity": spec.intensity,
                             "side": spec.side,
                             "primary_joint": spec.primary_joint()}
    return Trial(subject_id=f"S{subject:03d}", condition=condition, fps=cfg.fps,
                 times=times, positions=pos, source=source)


def config_as_dict(cfg: GaitGenConfig) -> dict:
    doc = asdict(cfg)
    doc["template"] = {
        j: {a: [c[0], [list(h) for h in c[1]]] for a, c in axes.items()}
        for j, axes in cfg.template.items()
    }
    return doc


def config_from_dict(doc: dict) -> GaitGenConfig:
    doc = copy.deepcopy(doc)
    tmpl = doc.get("template")
    if tmpl is not None:
        doc["template"] = {
            j: {a: (c[0], tuple(tuple(h) for h in c[1])) for a, c in axes.items()}
            for j, axes in tmpl.items()
        }
    try:
        return GaitGenConfig(**doc)
    except TypeError as exc:
        raise DataError(f"bad generator config: {exc}") from None


def generate_normative(cfg: GaitGenConfig) -> list[Trial]:
    """The full normative corpus: subjects x speeds x trials, deterministic."""
    trials = []
    for subject in range(cfg.n_subjects):
        for speed_name in sorted(cfg.speeds):
            for k in range(cfg.trials_per_speed):
                trials.append(_realize(cfg, subject, speed_name, k))
    return trials


def inject_anomaly(trial: Trial, spec: AnomalySpec) -> Trial:
    """Re-derive the trial's clean recipe from its generation record, apply
    the deviation before FK, and re-corrupt with the identical noise and
    dropout patterns."""
    src = trial.source
    if not isinstance(src, dict) or src.get("generator") != "synthgait":
        raise DataError("inject_anomaly needs a trial produced by this generator")
    if trial.condition != "normative":
        raise DataError("deviations are injected into normative trials only")
    cfg = config_from_dict(src["config"])
    return _realize(cfg, src["subject"], src["speed"], src["trial"], spec)


def corpus_manifest(trials: list[Trial]) -> dict:
    """Compact summary of a generated corpus (subjects, conditions, counts)."""
    entries = []
    for t in trials:
        e = {"subject": t.subject_id, "condition": t.condition,
             "frames": t.n_frames, "fps": t.fps}
        if isinstance(t.source, dict):
            e["speed"] = t.source.get("speed")
            if "anomaly" in t.source:
                e["anomaly"] = t.source["anomaly"]
        entries.append(e)
    return {
        "n_trials": len(trials),
        "subjects": sorted({t.subject_id for t in trials}),
        "conditions": sorted({t.condition for t in trials}),
        "trials": entries,
    }
