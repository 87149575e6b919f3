"""Angle tokenization: pose sequences -> (joint, frame) token grids.

Each token describes one joint at one frame with 12 features:

    [sin px, cos px, sin py, cos py, sin pz, cos pz, r1 (3), r2 (3)]

where r1, r2 are the first two columns of the joint's rotation matrix (the
6D rotation representation, recovered by Gram-Schmidt on decode). Motion is
carried separately as per-axis wrapped angular velocity (rad/frame), zero at
the window start.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .rotations import euler_to_matrix, matrix_to_euler, wrap_angle
from .skeleton import N_JOINTS

FEAT_DIM = 12
VEL_DIM = 3
WINDOW_LEN = 7
SINCOS_SLICE = slice(0, 6)


@dataclass
class TokenWindow:
    """One model input: a (12, 7) grid of token features plus velocities."""

    features: np.ndarray    # (J, T, 12)
    velocities: np.ndarray  # (J, T, 3)
    start: int = 0          # index of the window's first frame in the trial

    def __post_init__(self):
        if self.features.shape[-2:] != (WINDOW_LEN, FEAT_DIM) or self.features.shape[0] != N_JOINTS:
            raise DataError(f"window features must be (12, 7, 12), got {self.features.shape}")
        if self.velocities.shape != (N_JOINTS, WINDOW_LEN, VEL_DIM):
            raise DataError(f"window velocities must be (12, 7, 3), got {self.velocities.shape}")


def encode_features(angles: np.ndarray) -> np.ndarray:
    """Angles (..., 3) -> token features (..., 12)."""
    angles = np.asarray(angles, dtype=float)
    sc = np.empty(angles.shape[:-1] + (6,))
    sc[..., 0::2] = np.sin(angles)
    sc[..., 1::2] = np.cos(angles)
    rot = euler_to_matrix(angles)
    r1 = rot[..., :, 0]
    r2 = rot[..., :, 1]
    return np.concatenate([sc, r1, r2], axis=-1)


def encode_feature(angles: np.ndarray) -> np.ndarray:
    """Single-joint angles (3,) -> features (12,)."""
    return encode_features(np.asarray(angles, dtype=float).reshape(3))


def decode_features(features: np.ndarray, tol: float = 1e-6):
    """Features (..., 12) -> (angles (..., 3), fallback mask (...)).

    The 6D branch Gram-Schmidts (r1, r2) back to a rotation matrix; tokens
    whose r1/r2 are too short or too parallel for that fall back to
    per-axis atan2(sin, cos) and are flagged in the returned mask.
    """
    f = np.asarray(features, dtype=float)
    if f.shape[-1] != FEAT_DIM:
        raise DataError(f"token features must have {FEAT_DIM} channels, got {f.shape[-1]}")
    r1 = f[..., 6:9]
    r2 = f[..., 9:12]
    n1 = np.linalg.norm(r1, axis=-1)
    bad = n1 < tol
    safe_n1 = np.where(bad, 1.0, n1)
    b1 = r1 / safe_n1[..., None]
    r2p = r2 - np.sum(r2 * b1, axis=-1, keepdims=True) * b1
    n2 = np.linalg.norm(r2p, axis=-1)
    bad = bad | (n2 < tol)
    safe_n2 = np.where(n2 < tol, 1.0, n2)
    b2 = r2p / safe_n2[..., None]
    b3 = np.cross(b1, b2)
    rot = np.stack([b1, b2, b3], axis=-1)
    angles = matrix_to_euler(rot)

    if np.any(bad):
        sc = f[..., SINCOS_SLICE]
        fallback = np.stack(
            [np.arctan2(sc[..., 0], sc[..., 1]),
             np.arctan2(sc[..., 2], sc[..., 3]),
             np.arctan2(sc[..., 4], sc[..., 5])],
            axis=-1,
        )
        angles = np.where(bad[..., None], fallback, angles)
    return angles, bad


def decode_feature(features: np.ndarray) -> np.ndarray:
    """Single token (12,) -> angles (3,)."""
    angles, _ = decode_features(np.asarray(features, dtype=float).reshape(FEAT_DIM))
    return angles


def window_velocities(window_angles: np.ndarray) -> np.ndarray:
    """Wrapped backward differences per axis (J, T, 3); zero at frame 0."""
    v = np.zeros_like(window_angles)
    v[:, 1:] = wrap_angle(window_angles[:, 1:] - window_angles[:, :-1])
    return v


def make_windows(angle_seq: np.ndarray, stride: int = 1) -> list[TokenWindow]:
    """Slice a (N, 12, 3) angle sequence into 7-frame token windows.

    Windows overlap with the given stride (default 1). Velocities are
    computed within each window, so frame 0 of every window has zero
    velocity regardless of trial context.
    """
    angle_seq = np.asarray(angle_seq, dtype=float)
    n = angle_seq.shape[0]
    if n < WINDOW_LEN:
        raise DataError(f"trial too short to window: {n} < {WINDOW_LEN} frames")
    feats = encode_features(angle_seq)  # (N, 12, 12)
    windows = []
    for k in range(0, n - WINDOW_LEN + 1, stride):
        w = angle_seq[k : k + WINDOW_LEN]               # (7, 12, 3)
        wa = np.transpose(w, (1, 0, 2))                 # (12, 7, 3)
        wf = np.transpose(feats[k : k + WINDOW_LEN], (1, 0, 2))
        windows.append(TokenWindow(features=wf, velocities=window_velocities(wa), start=k))
    return windows


def stack_windows(windows: list[TokenWindow]):
    """Stack windows into (B, 12, 7, 12) features and (B, 12, 7, 3) velocities."""
    feats = np.stack([w.features for w in windows]).astype(np.float32)
    vels = np.stack([w.velocities for w in windows]).astype(np.float32)
    return feats, vels


def dump_windows_csv(path, windows: list[TokenWindow]):
    """Debug dump: one row per (window, joint, frame) with all 15 channels."""
    from .skeleton import JOINTS

    with open(path, "w") as fh:
        cols = [f"f{i}" for i in range(FEAT_DIM)] + [f"v{i}" for i in range(VEL_DIM)]
        fh.write("window,start,joint,frame," + ",".join(cols) + "\n")
        for wi, w in enumerate(windows):
            for j in range(N_JOINTS):
                for t in range(WINDOW_LEN):
                    row = np.concatenate([w.features[j, t], w.velocities[j, t]])
                    fh.write(
                        f"{wi},{w.start},{JOINTS[j]},{t},"
                        + ",".join(f"{x:.9g}" for x in row)
                        + "\n"
                    )
