"""Depth unprojection, normalization, voxelization, and prior file formats."""
import numpy as np
import pytest

from scenelat.errors import (
    DegenerateExtentError,
    InvariantViolationError,
    NoValidPixelsError,
)
from scenelat.latent import EMPTY, LANDMARK, PRIOR
from scenelat.prior import (
    BACKGROUND,
    DepthRaster,
    LabeledPointCloud,
    NormalizationTransform,
    init_scene_latent,
    normalize,
    project,
    read_depth_raster,
    read_ply,
    unproject,
    voxelize,
    write_depth_raster,
    write_ply,
)


def flat_raster(width=4, height=4, depth=1.0, fx=2.0, fy=2.0, cx=1.5, cy=1.5):
    d = np.full((height, width), depth)
    return DepthRaster(width, height, d, fx, fy, cx, cy,
                       np.ones((height, width), bool))


# --- unproject ---

def test_unproject_principal_point():
    r = flat_raster(cx=2.0, cy=1.0, depth=3.0)
    cloud = unproject(r)
    hit = cloud.points[(np.isclose(cloud.points[:, 0], 0)) &
                       (np.isclose(cloud.points[:, 1], 0))]
    assert len(hit) == 1 and hit[0, 2] == 3.0


def test_unproject_one_focal_length_off_axis():
    # pixel at (cx + fx, cy) with depth 2 -> (2, 0, 2)
    r = flat_raster(width=8, height=4, depth=2.0, fx=3.0, fy=3.0, cx=2.0, cy=1.0)
    cloud = unproject(r)
    match = cloud.points[np.isclose(cloud.points[:, 0], 2.0) &
                         np.isclose(cloud.points[:, 1], 0.0)]
    assert len(match) == 1
    assert np.allclose(match[0], [2.0, 0.0, 2.0])


def test_unproject_constant_depth_plane_closed_form():
    r = flat_raster(width=4, height=4, depth=1.0, fx=2.0, fy=2.0, cx=1.5, cy=1.5)
    cloud = unproject(r)
    assert len(cloud) == 16
    assert np.allclose(cloud.points[:, 2], 1.0)
    # per-pixel closed form evaluated independently
    expected = [((u - 1.5) / 2.0, (v - 1.5) / 2.0, 1.0)
                for v in range(4) for u in range(4)]
    assert np.allclose(sorted(cloud.points.tolist()), sorted(expected))
    assert (cloud.labels == BACKGROUND).all()


def test_unproject_project_round_trip_pixel_centers():
    rng = np.random.default_rng(0)
    depth = rng.uniform(0.5, 4.0, size=(12, 10))
    r = DepthRaster(10, 12, depth, 7.3, 6.1, 4.7, 5.9, np.ones((12, 10), bool))
    cloud = unproject(r)
    uv = project(cloud.points, r.fx, r.fy, r.cx, r.cy)
    vs, us = np.nonzero(r.valid_mask)
    assert np.abs(uv - np.stack([us, vs], axis=1)).max() < 1e-6


def test_unproject_skips_invalid_pixels():
    mask = np.ones((4, 4), bool)
    mask[0, :] = False
    r = DepthRaster(4, 4, np.full((4, 4), 2.0), 2, 2, 1.5, 1.5, mask)
    assert len(unproject(r)) == 12


def test_unproject_all_invalid_raises():
    r = DepthRaster(2, 2, np.ones((2, 2)), 1, 1, 0.5, 0.5, np.zeros((2, 2), bool))
    with pytest.raises(NoValidPixelsError):
        unproject(r)


# --- normalize ---

def test_normalize_identity_on_unit_cube():
    pts = np.array([[0, 0, 0], [1, 1, 1], [0.5, 0.2, 0.8]], float)
    cloud = LabeledPointCloud(pts, np.full(3, BACKGROUND, np.int32))
    normed, tf = normalize(cloud)
    assert tf.scale == pytest.approx(1.0)
    assert np.allclose(tf.offset, 0.0)
    assert np.allclose(normed.points, pts)


def test_normalize_longest_axis_rule():
    pts = np.array([[0, 0, 0], [2, 0, 0]], float)
    cloud = LabeledPointCloud(pts, np.full(2, BACKGROUND, np.int32))
    normed, tf = normalize(cloud)
    assert tf.scale == pytest.approx(0.5)
    assert sorted(normed.points[:, 0].tolist()) == [0.0, 1.0]
    assert np.allclose(normed.points[:, 1:], 0.5)


def test_normalize_random_cloud_bbox():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(200, 3)) * [3.0, 1.0, 0.2] + [5, -2, 9]
    cloud = LabeledPointCloud(pts, np.full(200, BACKGROUND, np.int32))
    normed, tf = normalize(cloud)
    lo, hi = normed.points.min(axis=0), normed.points.max(axis=0)
    assert (lo >= -1e-12).all() and (hi <= 1 + 1e-12).all()
    spans = hi - lo
    assert spans.max() == pytest.approx(1.0)
    # round trip through the returned transform
    assert np.allclose(tf.invert(normed.points), pts, atol=1e-9)


def test_normalize_single_point_centers():
    cloud = LabeledPointCloud(np.array([[7.0, 8.0, 9.0]]), np.array([-1], np.int32))
    normed, _ = normalize(cloud)
    assert np.allclose(normed.points, [[0.5, 0.5, 0.5]])


def test_normalize_empty_raises():
    with pytest.raises(DegenerateExtentError):
        normalize(LabeledPointCloud(np.zeros((0, 3)), np.zeros(0, np.int32)))


# --- voxelize ---

def test_voxelize_floor_binning():
    cloud = LabeledPointCloud(np.array([[0.5, 0.5, 0.5]]), np.array([-1], np.int32))
    pos, state = voxelize(cloud, 128)
    assert pos.tolist() == [[64, 64, 64]]
    assert state.tags[64, 64, 64] == PRIOR


def test_voxelize_clamps_boundary():
    cloud = LabeledPointCloud(np.array([[1.0, 1.0, 1.0]]), np.array([-1], np.int32))
    pos, _ = voxelize(cloud, 128)
    assert pos.tolist() == [[127, 127, 127]]


def test_voxelize_foreground_wins_with_majority_id():
    pts = np.array([[0.1, 0.1, 0.1]] * 3)
    labels = np.array([3, -1, -1], np.int32)  # one landmark + two background
    pos, state = voxelize(LabeledPointCloud(pts, labels), 8)
    assert pos.tolist() == [[0, 0, 0]]
    assert state.tags[0, 0, 0] == LANDMARK
    assert state.landmark_ids[0, 0, 0] == 3


def test_voxelize_majority_id_tie_breaks_low():
    pts = np.array([[0.1, 0.1, 0.1]] * 4)
    labels = np.array([5, 2, 5, 2], np.int32)
    _, state = voxelize(LabeledPointCloud(pts, labels), 8)
    assert state.landmark_ids[0, 0, 0] == 2


def test_voxelize_counts_bounded():
    rng = np.random.default_rng(4)
    pts = rng.random((500, 3))
    cloud = LabeledPointCloud(pts, np.full(500, BACKGROUND, np.int32))
    pos, state = voxelize(cloud, 16)
    assert len(pos) <= 500
    assert (state.tags != EMPTY).sum() == len(pos)


def test_voxelize_translation_scale_invariant_after_normalize():
    rng = np.random.default_rng(5)
    pts = rng.random((300, 3)) * 2.0
    labels = np.full(300, BACKGROUND, np.int32)
    base, _ = normalize(LabeledPointCloud(pts, labels))
    pos_a, _ = voxelize(base, 32)
    moved, _ = normalize(LabeledPointCloud(pts * 3.7 + [11, -4, 0.5], labels))
    pos_b, _ = voxelize(moved, 32)
    assert np.array_equal(pos_a, pos_b)


# --- init_scene_latent ---

def test_init_scene_latent_zero_features():
    pos = np.array([[0, 0, 0], [3, 2, 1], [1, 1, 1]], np.int32)
    lat = init_scene_latent(pos, 8, 8)
    assert len(lat) == 3 and lat.channels == 8
    assert (lat.features == 0).all()
    assert lat.is_canonical


def test_init_scene_latent_empty():
    lat = init_scene_latent(np.zeros((0, 3), np.int32), 8, 4)
    assert len(lat) == 0


# --- file formats ---

def test_depth_raster_file_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    depth = rng.uniform(1, 5, (6, 5))
    mask = rng.random((6, 5)) > 0.3
    mask[0, 0] = True
    r = DepthRaster(5, 6, np.where(mask, depth, 1.0), 2.2, 3.3, 2.0, 2.5, mask)
    write_depth_raster(r, tmp_path / "d.f32", tmp_path / "d.json",
                       tmp_path / "d.mask")
    out = read_depth_raster(tmp_path / "d.f32", tmp_path / "d.json")
    assert out.width == 5 and out.height == 6
    assert np.array_equal(out.valid_mask, mask)
    assert np.allclose(out.depth[mask], r.depth[mask], atol=1e-6)


def test_depth_raster_size_mismatch(tmp_path):
    (tmp_path / "d.f32").write_bytes(b"\0" * 12)
    (tmp_path / "d.json").write_text(
        '{"width": 4, "height": 4, "fx": 1, "fy": 1, "cx": 0, "cy": 0}')
    with pytest.raises(InvariantViolationError):
        read_depth_raster(tmp_path / "d.f32", tmp_path / "d.json")


def test_ply_round_trip(tmp_path):
    pts = np.array([[0.5, -1.25, 3.0], [2.0, 0.0, 1.0]])
    labels = np.array([-1, 4], np.int32)
    cloud = LabeledPointCloud(pts, labels)
    write_ply(cloud, tmp_path / "c.ply")
    out = read_ply(tmp_path / "c.ply")
    assert np.allclose(out.points, pts)
    assert out.labels.tolist() == [-1, 4]


def test_ply_rejects_non_ply(tmp_path):
    (tmp_path / "x.ply").write_text("obj\n")
    with pytest.raises(InvariantViolationError):
        read_ply(tmp_path / "x.ply")


def test_normalization_transform_json_round_trip():
    tf = NormalizationTransform(0.25, np.array([0.1, 0.2, 0.3]))
    back = NormalizationTransform.from_json(tf.to_json())
    pts = np.random.default_rng(7).random((10, 3))
    assert np.allclose(back.invert(back.apply(pts)), pts, atol=1e-12)
