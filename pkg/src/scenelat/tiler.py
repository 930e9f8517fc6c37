"""Region tiling: base grid + seam patches, and per-region context extraction.

The plan tiles the tight bounding box of occupied voxels with non-overlapping
base patches along x and y (the last tile shifts back to end at the box edge
when the extent is not a multiple, trading extra overlap for full-size
patches). Vertical starts are evenly interpolated so the height is covered by
the minimum number of full patches. Seam patches are then inserted at the
floor-midpoint between every pair of neighbouring origins, first along x,
then along y, which augments each horizontal axis list independently; the
final origin set is their cartesian product, deduplicated and sorted.

Region masks follow the voxel state: structure regenerates everything except
positively known occupancy (PRIOR, GENERATED, LANDMARK); features regenerate
everywhere except rows whose content already exists (GENERATED, LANDMARK) --
PRIOR rows carry placeholder zeros, not real features.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    EmptySceneError,
    InvariantViolationError,
    PatchLargerThanGridError,
)
from .latent import (
    GENERATED,
    LANDMARK,
    PRIOR,
    SceneState,
    StructuredLatent,
    window,
)
from .prior import NormalizationTransform, project

__all__ = ["PatchPlan", "RegionContext", "ImageMeta", "plan_patches",
           "extract_region", "region_cells_from_positions",
           "positions_from_region_cells"]


@dataclass(frozen=True)
class ImageMeta:
    """Top-down image geometry used to derive per-region crops.

    Camera intrinsics and the scene normalization transform are optional;
    without them crops degrade to the proportional x/y footprint.
    """

    width: int
    height: int
    fx: Optional[float] = None
    fy: Optional[float] = None
    cx: Optional[float] = None
    cy: Optional[float] = None
    normalization: Optional[NormalizationTransform] = None

    @property
    def has_camera(self) -> bool:
        return None not in (self.fx, self.fy, self.cx, self.cy, self.normalization)


@dataclass(frozen=True)
class PatchPlan:
    patch_shape: tuple[int, int, int]
    origins: tuple[tuple[int, int, int], ...]
    bbox: tuple[tuple[int, int, int], tuple[int, int, int]]  # inclusive corners

    def to_json(self) -> dict:
        return {"patch_shape": list(self.patch_shape),
                "origins": [list(o) for o in self.origins],
                "bbox": [list(self.bbox[0]), list(self.bbox[1])]}

    @classmethod
    def from_json(cls, obj) -> "PatchPlan":
        return cls(tuple(obj["patch_shape"]),
                   tuple(tuple(o) for o in obj["origins"]),
                   (tuple(obj["bbox"][0]), tuple(obj["bbox"][1])))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2)

    @classmethod
    def load(cls, path) -> "PatchPlan":
        with open(path) as f:
            return cls.from_json(json.load(f))


@dataclass(frozen=True)
class RegionContext:
    """Everything one region completion needs, windowed and rebased."""

    origin: tuple[int, int, int]
    shape: tuple[int, int, int]
    latent: StructuredLatent            # windowed, positions rebased
    tags: np.ndarray                    # windowed state tags, [x, y, z]
    structure_mask: np.ndarray          # flat region cells, True = regenerate
    feature_mask: np.ndarray            # per latent row, True = regenerate
    image_crop_rect: tuple[int, int, int, int]  # (u0, v0, w, h)


def _base_axis_origins(lo: int, hi: int, patch: int, grid: int) -> list[int]:
    """Non-overlapping tiles from lo; the last shifts back to end at hi."""
    extent = hi - lo
    count = max(1, math.ceil(extent / patch))
    origins = [lo + i * patch for i in range(count)]
    if origins[-1] + patch > hi:
        origins[-1] = max(0, min(hi, grid) - patch)
    return sorted(set(origins))


def _interpolated_axis_origins(lo: int, hi: int, patch: int, grid: int) -> list[int]:
    """Evenly spaced starts covering [lo, hi) with the minimum patch count."""
    extent = hi - lo
    count = max(1, math.ceil(extent / patch))
    if count == 1:
        return [max(0, min(lo, grid - patch))]
    span = extent - patch
    return sorted({lo + (i * span) // (count - 1) for i in range(count)})


def _with_seams(origins: list[int]) -> list[int]:
    out = set(origins)
    for a, b in zip(origins, origins[1:]):
        out.add((a + b) // 2)
    return sorted(out)


def plan_patches(occupied, grid_resolution: int, patch_shape) -> PatchPlan:
    """Tile the occupied bounding box per the base-grid + seam-patch rules."""
    occupied = np.asarray(occupied, np.int64).reshape(-1, 3)
    if len(occupied) == 0:
        raise EmptySceneError("cannot plan patches for an empty scene")
    patch = tuple(int(p) for p in patch_shape)
    m = int(grid_resolution)
    if any(p > m for p in patch) or any(p < 1 for p in patch):
        raise PatchLargerThanGridError(
            f"patch {patch} does not fit a {m}^3 grid")
    if occupied.min() < 0 or occupied.max() >= m:
        raise InvariantViolationError("occupied voxels outside the grid")

    lo = occupied.min(axis=0)
    hi = occupied.max(axis=0) + 1  # exclusive

    xs = _with_seams(_base_axis_origins(int(lo[0]), int(hi[0]), patch[0], m))
    ys = _with_seams(_base_axis_origins(int(lo[1]), int(hi[1]), patch[1], m))
    zs = _interpolated_axis_origins(int(lo[2]), int(hi[2]), patch[2], m)

    origins = sorted({(x, y, z) for x in xs for y in ys for z in zs})
    for o in origins:
        if any(o[a] + patch[a] > m for a in range(3)):
            raise InvariantViolationError(f"patch at {o} exceeds the grid")
    for axis, vals in enumerate((xs, ys, zs)):
        covered = sorted((v, v + patch[axis]) for v in vals)
        reach = covered[0][0]
        if reach > lo[axis]:
            raise InvariantViolationError("bbox not covered at low edge")
        for start, end in covered:
            if start > reach:
                raise InvariantViolationError(f"coverage gap on axis {axis}")
            reach = max(reach, end)
        if reach < hi[axis]:
            raise InvariantViolationError(f"bbox not covered on axis {axis}")

    return PatchPlan(patch, tuple(origins),
                     (tuple(int(v) for v in lo), tuple(int(v) for v in hi - 1)))


def region_cells_from_positions(positions: np.ndarray, shape) -> np.ndarray:
    """Rebased region positions -> flat x-fastest ±1 occupancy cells."""
    sx, sy, sz = shape
    cells = np.full(sx * sy * sz, -1.0, dtype=np.float32)
    if len(positions):
        p = np.asarray(positions, np.int64)
        cells[p[:, 0] + sx * p[:, 1] + sx * sy * p[:, 2]] = 1.0
    return cells


def positions_from_region_cells(cells: np.ndarray, shape,
                                threshold: float = 0.0) -> np.ndarray:
    """Flat x-fastest cells -> canonical-ordered region positions."""
    sx, sy, _ = shape
    idx = np.nonzero(cells > threshold)[0]
    pos = np.empty((len(idx), 3), np.int32)
    pos[:, 0] = idx % sx
    pos[:, 1] = (idx // sx) % sy
    pos[:, 2] = idx // (sx * sy)
    order = np.lexsort((pos[:, 2], pos[:, 1], pos[:, 0]))
    return pos[order]


def _crop_rect(origin, shape, grid_resolution: int,
               meta: Optional[ImageMeta]) -> tuple[int, int, int, int]:
    if meta is None:
        meta = ImageMeta(256, 256)
    if meta.has_camera:
        corners = np.array([[origin[0] + dx * shape[0],
                             origin[1] + dy * shape[1],
                             origin[2] + dz * shape[2]]
                            for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)],
                           np.float64) / grid_resolution
        cam = meta.normalization.invert(corners)
        uv = project(cam, meta.fx, meta.fy, meta.cx, meta.cy)
        u0 = math.floor(uv[:, 0].min())
        v0 = math.floor(uv[:, 1].min())
        u1 = math.ceil(uv[:, 0].max())
        v1 = math.ceil(uv[:, 1].max())
    else:
        u0 = math.floor(origin[0] / grid_resolution * meta.width)
        v0 = math.floor(origin[1] / grid_resolution * meta.height)
        u1 = math.ceil((origin[0] + shape[0]) / grid_resolution * meta.width)
        v1 = math.ceil((origin[1] + shape[1]) / grid_resolution * meta.height)
    u0 = max(0, min(u0, meta.width - 1))
    v0 = max(0, min(v0, meta.height - 1))
    u1 = max(u0 + 1, min(u1, meta.width))
    v1 = max(v0 + 1, min(v1, meta.height))
    return (int(u0), int(v0), int(u1 - u0), int(v1 - v0))


def extract_region(scene_latent: StructuredLatent, state: SceneState, origin,
                   patch_shape, image_meta: Optional[ImageMeta] = None) -> RegionContext:
    """Window the scene at one plan origin and derive the two regen masks."""
    origin = tuple(int(v) for v in origin)
    shape = tuple(int(v) for v in patch_shape)
    lat = window(scene_latent, origin, shape)
    tags = state.tags[origin[0]:origin[0] + shape[0],
                      origin[1]:origin[1] + shape[1],
                      origin[2]:origin[2] + shape[2]]

    known = (tags == PRIOR) | (tags == GENERATED) | (tags == LANDMARK)
    structure_mask = ~known.transpose(2, 1, 0).reshape(-1)  # flat x-fastest

    p = lat.positions
    row_tags = tags[p[:, 0], p[:, 1], p[:, 2]]
    feature_mask = ~((row_tags == GENERATED) | (row_tags == LANDMARK))

    rect = _crop_rect(origin, shape, state.resolution, image_meta)
    return RegionContext(origin, shape, lat, np.ascontiguousarray(tags),
                         structure_mask, feature_mask, rect)
