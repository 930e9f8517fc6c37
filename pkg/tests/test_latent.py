"""Structured latent container, conversions, windows, and SLAT serialization."""
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenelat.errors import (
    BadMagicError,
    DuplicatePositionError,
    InvariantViolationError,
    OutOfBoundsError,
    TruncatedFileError,
    VersionMismatchError,
    WindowOutOfGridError,
)
from scenelat.latent import (
    StructuredLatent,
    canonicalize,
    from_dense,
    read_slat,
    to_dense,
    window,
    write_slat,
)


def random_latent(rng, resolution=16, count=None, channels=4):
    """Unique random positions with random features, arbitrary order."""
    if count is None:
        count = rng.integers(0, resolution ** 3 // 2)
    flat = rng.choice(resolution ** 3, size=count, replace=False)
    pos = np.stack([flat % resolution, (flat // resolution) % resolution,
                    flat // resolution ** 2], axis=1).astype(np.int32)
    feats = rng.standard_normal((count, channels)).astype(np.float32)
    return StructuredLatent(resolution, pos, feats, channels)


# --- construction invariants ---

def test_duplicate_positions_rejected():
    pos = np.array([[1, 2, 3], [1, 2, 3]], np.int32)
    feats = np.zeros((2, 2), np.float32)
    with pytest.raises(DuplicatePositionError):
        StructuredLatent(8, pos, feats)


def test_out_of_bounds_rejected():
    pos = np.array([[0, 0, 8]], np.int32)
    with pytest.raises(OutOfBoundsError):
        StructuredLatent(8, pos, np.zeros((1, 2), np.float32))


def test_nan_features_rejected():
    pos = np.array([[0, 0, 0]], np.int32)
    feats = np.array([[np.nan, 0.0]], np.float32)
    with pytest.raises(InvariantViolationError):
        StructuredLatent(8, pos, feats)


def test_row_count_mismatch_rejected():
    pos = np.array([[0, 0, 0], [1, 0, 0]], np.int32)
    with pytest.raises(InvariantViolationError):
        StructuredLatent(8, pos, np.zeros((1, 2), np.float32))


def test_arrays_read_only():
    lat = StructuredLatent(8, np.array([[1, 0, 0]], np.int32),
                           np.zeros((1, 2), np.float32))
    with pytest.raises(ValueError):
        lat.positions[0, 0] = 3


# --- canonicalize ---

def test_canonicalize_two_elements():
    pos = np.array([[1, 0, 0], [0, 0, 0]], np.int32)
    feats = np.array([[1.0], [2.0]], np.float32)
    out = canonicalize(StructuredLatent(4, pos, feats))
    assert out.positions.tolist() == [[0, 0, 0], [1, 0, 0]]
    assert out.features.ravel().tolist() == [2.0, 1.0]


def test_canonicalize_idempotent_on_sorted():
    pos = np.array([[0, 0, 0], [0, 0, 1], [2, 1, 0]], np.int32)
    lat = StructuredLatent(4, pos, np.zeros((3, 1), np.float32))
    out = canonicalize(lat)
    assert out is lat  # already canonical, returned unchanged


def test_canonicalize_matches_reference_sort():
    rng = np.random.default_rng(7)
    lat = random_latent(rng, resolution=16, count=100)
    out = canonicalize(lat)
    # independent oracle: python tuple sort over (position, feature) pairs
    ref = sorted(zip(map(tuple, lat.positions.tolist()),
                     map(tuple, lat.features.tolist())))
    assert [list(p) for p, _ in ref] == out.positions.tolist()
    assert np.allclose([f for _, f in ref], out.features)
    again = canonicalize(out)
    assert np.array_equal(again.positions, out.positions)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31))
def test_canonicalize_is_a_permutation(seed):
    rng = np.random.default_rng(seed)
    lat = random_latent(rng, resolution=8, channels=3)
    out = canonicalize(lat)
    assert sorted(map(tuple, lat.positions.tolist())) == \
        sorted(map(tuple, out.positions.tolist()))
    assert sorted(map(tuple, lat.features.tolist())) == \
        sorted(map(tuple, out.features.tolist()))


# --- dense round trips ---

def test_to_dense_empty():
    lat = StructuredLatent.empty(4, 2)
    grid = to_dense(lat)
    assert grid.cells.shape == (64,)
    assert (grid.cells == -1.0).all()


def test_to_dense_single_origin_voxel():
    lat = StructuredLatent(2, np.array([[0, 0, 0]], np.int32),
                           np.zeros((1, 1), np.float32))
    cells = to_dense(lat).cells
    assert cells[0] == 1.0
    assert (cells[1:] == -1.0).all()


def test_dense_layout_is_x_fastest():
    lat = StructuredLatent(2, np.array([[1, 0, 0]], np.int32),
                           np.zeros((1, 1), np.float32))
    assert to_dense(lat).cells[1] == 1.0


def test_from_dense_all_negative():
    lat = StructuredLatent.empty(4, 1)
    assert len(from_dense(to_dense(lat), 0.0)) == 0


def test_from_dense_single():
    lat = StructuredLatent(2, np.array([[1, 1, 1]], np.int32),
                           np.zeros((1, 1), np.float32))
    pos = from_dense(to_dense(lat), 0.0)
    assert pos.tolist() == [[1, 1, 1]]


@pytest.mark.parametrize("seed", range(10))
def test_dense_round_trip_random(seed):
    rng = np.random.default_rng(seed)
    for _ in range(5):
        lat = canonicalize(random_latent(rng, resolution=12))
        pos = from_dense(to_dense(lat), 0.0)
        assert np.array_equal(pos, lat.positions)


# --- windows ---

def test_window_full_grid_is_identity():
    rng = np.random.default_rng(3)
    lat = canonicalize(random_latent(rng, resolution=8, count=40))
    out = window(lat, (0, 0, 0), (8, 8, 8))
    assert np.array_equal(out.positions, lat.positions)
    assert np.array_equal(out.features, lat.features)


def test_window_rebases_positions():
    lat = StructuredLatent(128, np.array([[70, 10, 10]], np.int32),
                           np.ones((1, 2), np.float32))
    out = window(lat, (64, 0, 0), (64, 64, 64))
    assert out.positions.tolist() == [[6, 10, 10]]
    assert out.resolution == 64


def test_window_octants_partition_entries():
    rng = np.random.default_rng(11)
    lat = random_latent(rng, resolution=128, count=5000)
    total = 0
    for ox in (0, 64):
        for oy in (0, 64):
            for oz in (0, 64):
                total += len(window(lat, (ox, oy, oz), (64, 64, 64)))
    assert total == len(lat)


def test_window_out_of_grid():
    lat = StructuredLatent.empty(8, 1)
    with pytest.raises(WindowOutOfGridError):
        window(lat, (4, 0, 0), (8, 8, 8))
    with pytest.raises(WindowOutOfGridError):
        window(lat, (-1, 0, 0), (4, 4, 4))


# --- SLAT serialization ---

def test_slat_empty_round_trip():
    lat = StructuredLatent.empty(64, 8)
    buf = io.BytesIO()
    write_slat(lat, buf)
    out = read_slat(io.BytesIO(buf.getvalue()))
    assert out.resolution == 64 and out.channels == 8 and len(out) == 0


def test_slat_round_trip_bit_exact():
    rng = np.random.default_rng(5)
    lat = canonicalize(random_latent(rng, resolution=64, count=1000, channels=8))
    buf = io.BytesIO()
    write_slat(lat, buf)
    data = buf.getvalue()
    out = read_slat(io.BytesIO(data))
    assert np.array_equal(out.positions, lat.positions)
    assert out.features.tobytes() == lat.features.tobytes()
    buf2 = io.BytesIO()
    write_slat(out, buf2)
    assert buf2.getvalue() == data


def test_slat_rejects_bad_magic():
    with pytest.raises(BadMagicError):
        read_slat(io.BytesIO(b"NOPE" + b"\0" * 32))


def test_slat_rejects_wrong_version():
    lat = StructuredLatent.empty(4, 1)
    buf = io.BytesIO()
    write_slat(lat, buf)
    data = bytearray(buf.getvalue())
    data[4] = 99
    with pytest.raises(VersionMismatchError):
        read_slat(io.BytesIO(bytes(data)))


def test_slat_rejects_truncation():
    rng = np.random.default_rng(9)
    lat = canonicalize(random_latent(rng, resolution=16, count=20, channels=2))
    buf = io.BytesIO()
    write_slat(lat, buf)
    data = buf.getvalue()
    for cut in (2, 10, len(data) - 3):
        with pytest.raises(TruncatedFileError):
            read_slat(io.BytesIO(data[:cut]))


def test_slat_rejects_unsorted_positions():
    pos = np.array([[1, 0, 0], [0, 0, 0]], np.int32)
    lat = StructuredLatent(4, pos, np.zeros((2, 1), np.float32))
    buf = io.BytesIO()
    with pytest.raises(InvariantViolationError):
        write_slat(lat, buf)
    # forge an unsorted file to exercise the reader side
    good = canonicalize(lat)
    buf = io.BytesIO()
    write_slat(good, buf)
    data = bytearray(buf.getvalue())
    records_at = 24  # 4 magic + 4 version + 4 K + 4 C + 8 L
    rec = data[records_at:records_at + 6]
    data[records_at:records_at + 6] = data[records_at + 6:records_at + 12]
    data[records_at + 6:records_at + 12] = rec
    with pytest.raises(InvariantViolationError):
        read_slat(io.BytesIO(bytes(data)))


def test_slat_file_path_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    lat = canonicalize(random_latent(rng, resolution=32, count=64, channels=4))
    path = tmp_path / "scene.slat"
    write_slat(lat, path)
    out = read_slat(path)
    assert np.array_equal(out.positions, lat.positions)
    assert np.array_equal(out.features, lat.features)
