"""Token features: sin/cos + 6D rotation encoding, decode fallback, windows."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitmae.errors import DataError
from gaitmae.features import (
    FEAT_DIM,
    SINCOS_SLICE,
    TokenWindow,
    VEL_DIM,
    WINDOW_LEN,
    decode_feature,
    decode_features,
    dump_windows_csv,
    encode_feature,
    encode_features,
    make_windows,
    stack_windows,
    window_velocities,
)
from gaitmae.rotations import euler_to_matrix, wrap_angle
from gaitmae.skeleton import N_JOINTS


def test_encode_layout():
    ang = np.array([0.3, -1.1, 2.0])
    f = encode_feature(ang)
    assert f.shape == (FEAT_DIM,)
    assert np.allclose(f[0:6:2], np.sin(ang))
    assert np.allclose(f[1:6:2], np.cos(ang))
    r = euler_to_matrix(ang)
    assert np.allclose(f[6:9], r[:, 0])
    assert np.allclose(f[9:12], r[:, 1])


angle_triple = st.lists(
    st.floats(-np.pi + 1e-3, np.pi - 1e-3, allow_nan=False), min_size=3, max_size=3
)


@settings(max_examples=300)
@given(angle_triple)
def test_encode_decode_roundtrip(ang):
    ang = np.array(ang)
    dec, bad = decode_features(encode_feature(ang))
    assert not bad
    # compare as matrices: the angle triple itself is ambiguous at gimbal lock
    assert np.abs(euler_to_matrix(dec) - euler_to_matrix(ang)).max() < 1e-9


def test_decode_prefers_rotation_channels():
    # corrupt sin/cos but keep r1/r2: the 6D branch wins
    ang = np.array([0.4, 0.2, -0.9])
    f = encode_feature(ang)
    f[SINCOS_SLICE] = 0.0
    dec, bad = decode_features(f)
    assert not bad
    assert np.abs(euler_to_matrix(dec) - euler_to_matrix(ang)).max() < 1e-9


def test_decode_fallback_on_degenerate_rotation():
    ang = np.array([0.4, 0.2, -0.9])
    f = encode_feature(ang)
    f[6:12] = 0.0  # kill r1/r2 entirely
    dec, bad = decode_features(f)
    assert bad
    assert np.allclose(dec, ang, atol=1e-9)  # atan2(sin, cos) rescue


def test_decode_fallback_on_parallel_columns():
    f = np.zeros(FEAT_DIM)
    ang = np.array([0.1, -0.2, 0.3])
    f[:6] = encode_feature(ang)[:6]
    f[6:9] = [1.0, 0.0, 0.0]
    f[9:12] = [2.0, 0.0, 0.0]  # parallel to r1
    dec, bad = decode_features(f)
    assert bad
    assert np.allclose(dec, ang, atol=1e-9)


def test_decode_mixed_batch_flags_only_bad_tokens():
    good = encode_feature(np.array([0.5, 0.1, 0.2]))
    poisoned = good.copy()
    poisoned[6:12] = 0.0
    batch = np.stack([good, poisoned])
    dec, bad = decode_features(batch)
    assert list(bad) == [False, True]
    assert np.allclose(dec[0], dec[1], atol=1e-9)


def test_decode_normalizes_scaled_rotation_channels():
    ang = np.array([0.7, -0.3, 1.2])
    f = encode_feature(ang)
    f[6:12] *= 3.7  # decode must be scale-invariant via Gram-Schmidt
    dec, bad = decode_features(f)
    assert not bad
    assert np.abs(euler_to_matrix(dec) - euler_to_matrix(ang)).max() < 1e-9


def test_decode_wrong_channel_count_raises():
    with pytest.raises(DataError):
        decode_features(np.zeros((4, 11)))


def test_window_velocities_zero_start_and_wrapped():
    w = np.zeros((N_JOINTS, WINDOW_LEN, 3))
    w[0, :, 0] = np.linspace(3.0, 3.6, WINDOW_LEN)  # crosses pi
    v = window_velocities(wrap_angle(w))
    assert np.abs(v[:, 0]).max() == 0.0
    assert np.allclose(v[0, 1:, 0], 0.1, atol=1e-9)  # no 2*pi jumps


def test_make_windows_counts_and_starts():
    n = 20
    seq = np.zeros((n, N_JOINTS, 3))
    ws = make_windows(seq)
    assert len(ws) == n - WINDOW_LEN + 1
    assert [w.start for w in ws[:3]] == [0, 1, 2]
    ws3 = make_windows(seq, stride=3)
    assert [w.start for w in ws3] == [0, 3, 6, 9, 12]


def test_make_windows_content_matches_manual_slice():
    rng = np.random.default_rng(0)
    seq = rng.uniform(-3.0, 3.0, size=(12, N_JOINTS, 3))
    w = make_windows(seq)[2]
    manual = np.transpose(encode_features(seq[2 : 2 + WINDOW_LEN]), (1, 0, 2))
    assert np.allclose(w.features, manual, atol=1e-12)
    assert w.velocities.shape == (N_JOINTS, WINDOW_LEN, VEL_DIM)


def test_make_windows_too_short():
    with pytest.raises(DataError):
        make_windows(np.zeros((WINDOW_LEN - 1, N_JOINTS, 3)))


def test_token_window_shape_validation():
    with pytest.raises(DataError):
        TokenWindow(features=np.zeros((N_JOINTS, WINDOW_LEN, 5)),
                    velocities=np.zeros((N_JOINTS, WINDOW_LEN, VEL_DIM)))
    with pytest.raises(DataError):
        TokenWindow(features=np.zeros((N_JOINTS, WINDOW_LEN, FEAT_DIM)),
                    velocities=np.zeros((N_JOINTS, 3, VEL_DIM)))


def test_stack_windows_dtype_and_shapes():
    seq = np.random.default_rng(1).normal(size=(10, N_JOINTS, 3))
    feats, vels = stack_windows(make_windows(seq))
    assert feats.shape == (4, N_JOINTS, WINDOW_LEN, FEAT_DIM)
    assert vels.shape == (4, N_JOINTS, WINDOW_LEN, VEL_DIM)
    assert feats.dtype == np.float32 and vels.dtype == np.float32


def test_dump_windows_csv(tmp_path):
    seq = np.random.default_rng(2).normal(size=(8, N_JOINTS, 3))
    ws = make_windows(seq)
    path = tmp_path / "windows.csv"
    dump_windows_csv(path, ws)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("window,start,joint,frame,")
    assert len(lines) == 1 + len(ws) * N_JOINTS * WINDOW_LEN
