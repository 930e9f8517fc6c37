"""Procedural test scenes.

The two-box town is a fully deterministic miniature of the real input: a
ground plane seen top-down with two cuboid buildings, one of them a labeled
landmark. An occlusion disk of invalid pixels exercises hole handling, and a
separately sampled, deliberately misaligned landmark surface cloud exercises
the ICP/substitution path.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .align import RigidTransform
from .prior import DepthRaster, LabeledPointCloud, write_depth_raster, write_ply

__all__ = ["TwoBoxTown", "two_box_town", "write_two_box_inputs"]

GROUND_DEPTH = 4.0
BOX_A_RECT = (18, 22, 38, 42)    # u0, v0, u1, v1 (pixels)
BOX_A_TOP = 3.3
BOX_B_RECT = (52, 50, 78, 76)
BOX_B_TOP = 2.9
LANDMARK_ID = 0
HOLE_CENTER = (30, 60)
HOLE_RADIUS = 4.0


@dataclass(frozen=True)
class TwoBoxTown:
    raster: DepthRaster
    label_map: np.ndarray            # (h, w) int32, -1 background
    landmark_cloud: LabeledPointCloud  # generated surface, misaligned frame
    landmark_id: int
    misalignment: RigidTransform     # ground truth applied to the clean cloud


def _box_world_extent(rect, top_depth, fx, fy, cx, cy):
    u0, v0, u1, v1 = rect
    x0 = top_depth * (u0 - cx) / fx
    x1 = top_depth * ((u1 - 1) - cx) / fx
    y0 = top_depth * (v0 - cy) / fy
    y1 = top_depth * ((v1 - 1) - cy) / fy
    return (min(x0, x1), max(x0, x1)), (min(y0, y1), max(y0, y1))


def _sample_box_surface(xr, yr, zr, count, rng):
    """Uniform samples over the five visible faces of an axis-aligned box."""
    (x0, x1), (y0, y1), (z0, z1) = xr, yr, zr
    spans = np.array([
        (x1 - x0) * (y1 - y0),                # top (z = z0, nearer the camera)
        (x1 - x0) * (z1 - z0), (x1 - x0) * (z1 - z0),   # y side walls
        (y1 - y0) * (z1 - z0), (y1 - y0) * (z1 - z0),   # x side walls
    ])
    probs = spans / spans.sum()
    face = rng.choice(5, size=count, p=probs)
    u = rng.random(count)
    v = rng.random(count)
    pts = np.empty((count, 3))
    top = face == 0
    pts[top] = np.stack([x0 + u[top] * (x1 - x0),
                         y0 + v[top] * (y1 - y0),
                         np.full(top.sum(), z0)], axis=1)
    for f, (fix_axis, fix_val) in enumerate(
            [(1, y0), (1, y1), (0, x0), (0, x1)], start=1):
        sel = face == f
        n = sel.sum()
        a = x0 + u[sel] * (x1 - x0) if fix_axis == 1 else np.full(n, fix_val)
        b = np.full(n, fix_val) if fix_axis == 1 else y0 + u[sel] * (y1 - y0)
        z = z0 + v[sel] * (z1 - z0)
        pts[sel] = np.stack([a, b, z], axis=1)
    return pts


def _rotation_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def two_box_town(width: int = 96, height: int = 96, seed: int = 1234) -> TwoBoxTown:
    fx = fy = 120.0
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0

    depth = np.full((height, width), GROUND_DEPTH)
    label_map = np.full((height, width), -1, np.int32)

    au0, av0, au1, av1 = BOX_A_RECT
    depth[av0:av1, au0:au1] = BOX_A_TOP
    bu0, bv0, bu1, bv1 = BOX_B_RECT
    depth[bv0:bv1, bu0:bu1] = BOX_B_TOP
    label_map[bv0:bv1, bu0:bu1] = LANDMARK_ID

    vv, uu = np.mgrid[0:height, 0:width]
    hole = (uu - HOLE_CENTER[0]) ** 2 + (vv - HOLE_CENTER[1]) ** 2 <= HOLE_RADIUS ** 2
    valid = ~hole

    raster = DepthRaster(width, height, depth, fx, fy, cx, cy, valid)

    # landmark surface cloud in the generator's own (misaligned) frame
    xr, yr = _box_world_extent(BOX_B_RECT, BOX_B_TOP, fx, fy, cx, cy)
    zr = (BOX_B_TOP, GROUND_DEPTH)
    rng = np.random.default_rng(seed)
    clean = _sample_box_surface(xr, yr, zr, 1500, rng)
    misalign = RigidTransform(_rotation_z(np.deg2rad(3.0)),
                              np.array([0.04, -0.03, 0.02]))
    moved = misalign.apply(clean)
    cloud = LabeledPointCloud(moved, np.full(len(moved), LANDMARK_ID, np.int32))
    return TwoBoxTown(raster, label_map, cloud, LANDMARK_ID, misalign)


def write_two_box_inputs(directory, town: TwoBoxTown | None = None) -> dict:
    """Write the fixture's input files; returns the pipeline `inputs` block."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if town is None:
        town = two_box_town()
    depth = directory / "depth.f32"
    meta = directory / "depth.json"
    mask = directory / "depth.mask"
    labels = directory / "labels.i32"
    landmark = directory / "landmark0.ply"
    write_depth_raster(town.raster, depth, meta, mask)
    labels.write_bytes(town.label_map.astype("<i4").tobytes())
    write_ply(town.landmark_cloud, landmark)
    return {"depth": str(depth), "meta": str(meta),
            "label_map": str(labels),
            "landmarks": [{"id": town.landmark_id, "ply": str(landmark)}]}
