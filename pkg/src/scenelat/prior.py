"""Scene prior construction from depth rasters and labeled point clouds.

Pipeline: unproject valid depth pixels through the pinhole intrinsics into a
camera-frame cloud, optionally substitute landmark regions with aligned
generated points, normalize the cloud into the unit cube, voxelize at scene
resolution M, and zero-initialize per-voxel features.

Voxels containing at least one foreground point are tagged LANDMARK (landmarks
must survive intact through masking and fusion); voxels with only background
points are PRIOR. Invalid-depth pixels are dropped, not inpainted; the flow
completion fills those holes later.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateExtentError,
    InvariantViolationError,
    NoValidPixelsError,
)
from .latent import LANDMARK, PRIOR, SceneState, StructuredLatent, canonicalize

__all__ = [
    "DepthRaster", "LabeledPointCloud", "NormalizationTransform",
    "unproject", "normalize", "voxelize", "init_scene_latent",
    "read_depth_raster", "write_depth_raster", "read_ply", "write_ply",
    "BACKGROUND",
]

BACKGROUND = -1  # label value; >= 0 means foreground landmark instance id


@dataclass(frozen=True)
class DepthRaster:
    """Metric depth image with pinhole intrinsics and a validity mask."""

    width: int
    height: int
    depth: np.ndarray       # (height, width) float, meters
    fx: float
    fy: float
    cx: float
    cy: float
    valid_mask: np.ndarray  # (height, width) bool

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float64)
        mask = np.asarray(self.valid_mask, dtype=bool)
        if depth.shape != (self.height, self.width) or mask.shape != depth.shape:
            raise InvariantViolationError(
                f"depth/mask must be ({self.height},{self.width}), got {depth.shape}")
        if self.fx <= 0 or self.fy <= 0:
            raise InvariantViolationError("focal lengths must be positive")
        if not np.isfinite(depth[mask]).all() or (depth[mask] <= 0).any():
            raise InvariantViolationError("valid depth must be finite and positive")
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "valid_mask", mask)


@dataclass(frozen=True)
class LabeledPointCloud:
    """Points in scene units with per-point background/landmark labels."""

    points: np.ndarray  # (P, 3) float64
    labels: np.ndarray  # (P,) int32, BACKGROUND or landmark id >= 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        labels = np.asarray(self.labels, dtype=np.int32).reshape(-1)
        if len(pts) != len(labels):
            raise InvariantViolationError("labels length must equal points length")
        if not np.isfinite(pts).all():
            raise InvariantViolationError("points must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class NormalizationTransform:
    """Isotropic scale + offset mapping scene coordinates into [0,1]^3."""

    scale: float
    offset: np.ndarray  # (3,)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points * self.scale + self.offset

    def invert(self, points: np.ndarray) -> np.ndarray:
        return (points - self.offset) / self.scale

    def to_json(self) -> dict:
        return {"scale": self.scale, "offset": list(map(float, self.offset))}

    @classmethod
    def from_json(cls, obj) -> "NormalizationTransform":
        return cls(float(obj["scale"]), np.asarray(obj["offset"], np.float64))


def unproject(raster: DepthRaster) -> LabeledPointCloud:
    """Per-pixel pinhole unprojection of valid depths into the camera frame.

    Pixel (u, v) with depth d maps to (d*(u-cx)/fx, d*(v-cy)/fy, d). All
    points start labeled BACKGROUND.
    """
    vs, us = np.nonzero(raster.valid_mask)
    if len(us) == 0:
        raise NoValidPixelsError("depth raster has no valid pixels")
    d = raster.depth[vs, us]
    pts = np.stack([d * (us - raster.cx) / raster.fx,
                    d * (vs - raster.cy) / raster.fy,
                    d], axis=1)
    return LabeledPointCloud(pts, np.full(len(pts), BACKGROUND, np.int32))


def project(points: np.ndarray, fx, fy, cx, cy) -> np.ndarray:
    """Inverse of unproject: camera-frame points to (u, v) pixel coordinates."""
    pts = np.asarray(points, np.float64)
    z = pts[:, 2]
    return np.stack([fx * pts[:, 0] / z + cx, fy * pts[:, 1] / z + cy], axis=1)


def labels_from_map(raster: DepthRaster, label_map: np.ndarray) -> np.ndarray:
    """Per-point labels for unproject(raster)'s point order (valid-pixel scan).

    The label map is the pixel-space instance segmentation: -1 background,
    >= 0 landmark instance id.
    """
    label_map = np.asarray(label_map, np.int32)
    if label_map.shape != (raster.height, raster.width):
        raise InvariantViolationError(
            f"label map must be ({raster.height},{raster.width}), got {label_map.shape}")
    vs, us = np.nonzero(raster.valid_mask)
    return label_map[vs, us]


def normalize(cloud: LabeledPointCloud) -> tuple[LabeledPointCloud, NormalizationTransform]:
    """Fit the cloud's bounding box into [0,1]^3, isotropically.

    The longest axis spans exactly [0,1]; the other axes are centered. A
    single point (zero extent on all axes) maps to the cube center by
    convention rather than erroring.
    """
    if len(cloud) == 0:
        raise DegenerateExtentError("cannot normalize an empty cloud")
    lo = cloud.points.min(axis=0)
    hi = cloud.points.max(axis=0)
    extent = hi - lo
    longest = float(extent.max())
    if longest == 0.0:
        transform = NormalizationTransform(1.0, np.array([0.5, 0.5, 0.5]) - lo)
    else:
        scale = 1.0 / longest
        # center each axis: offset places axis midpoint at 0.5
        offset = 0.5 - (lo + hi) * (scale / 2.0)
        transform = NormalizationTransform(scale, offset)
    return (LabeledPointCloud(transform.apply(cloud.points), cloud.labels),
            transform)


def voxelize(cloud: LabeledPointCloud, resolution: int) -> tuple[np.ndarray, SceneState]:
    """Bin normalized points into an M^3 grid; label voxels from point labels.

    Voxel index is floor(coord * M) clamped into [0, M-1] (the longest axis
    produces exact 1.0 by construction). Any foreground point makes its voxel
    LANDMARK; ties between landmark ids resolve to the majority, lowest id on
    a split. Background-only voxels are PRIOR.
    """
    m = int(resolution)
    idx = np.floor(cloud.points * m).astype(np.int64)
    np.clip(idx, 0, m - 1, out=idx)
    flat = idx[:, 0] + m * idx[:, 1] + m * m * idx[:, 2]

    tags = np.zeros((m, m, m), np.uint8)
    ids = np.full((m, m, m), -1, np.int32)

    uniq, inverse = np.unique(flat, return_inverse=True)
    positions = np.empty((len(uniq), 3), np.int32)
    positions[:, 0] = uniq % m
    positions[:, 1] = (uniq // m) % m
    positions[:, 2] = uniq // (m * m)

    fg = cloud.labels >= 0
    x, y, z = positions[:, 0], positions[:, 1], positions[:, 2]
    tags[x, y, z] = PRIOR

    if fg.any():
        lm_voxel = inverse[fg]
        lm_label = cloud.labels[fg]
        # majority landmark id per voxel, lowest id winning ties: count pairs
        order = np.lexsort((lm_label, lm_voxel))
        vv, ll = lm_voxel[order], lm_label[order]
        pair_change = np.empty(len(vv), bool)
        pair_change[0] = True
        pair_change[1:] = (vv[1:] != vv[:-1]) | (ll[1:] != ll[:-1])
        starts = np.nonzero(pair_change)[0]
        counts = np.diff(np.append(starts, len(vv)))
        best: dict[int, tuple[int, int]] = {}
        for s, c in zip(starts, counts):
            v, lab = int(vv[s]), int(ll[s])
            cur = best.get(v)
            # higher count wins; equal count keeps the earlier (lower) id
            if cur is None or c > cur[0]:
                best[v] = (int(c), lab)
        for v, (_, lab) in best.items():
            px, py, pz = positions[v]
            tags[px, py, pz] = LANDMARK
            ids[px, py, pz] = lab

    order = np.lexsort((positions[:, 2], positions[:, 1], positions[:, 0]))
    return positions[order], SceneState(m, tags, ids)


def init_scene_latent(positions: np.ndarray, resolution: int, channels: int) -> StructuredLatent:
    """Scene latent with the given occupancy and all-zero feature rows."""
    positions = np.asarray(positions, np.int32).reshape(-1, 3)
    feats = np.zeros((len(positions), channels), np.float32)
    return canonicalize(StructuredLatent(resolution, positions, feats, channels))


# --- file formats ---

def write_depth_raster(raster: DepthRaster, depth_path, meta_path, mask_path=None):
    """Raw little-endian float32 depth + JSON sidecar (+ optional u8 mask)."""
    depth_path, meta_path = Path(depth_path), Path(meta_path)
    depth_path.write_bytes(raster.depth.astype("<f4").tobytes())
    meta = {"width": raster.width, "height": raster.height,
            "fx": raster.fx, "fy": raster.fy, "cx": raster.cx, "cy": raster.cy,
            "depth_scale": 1.0}
    if mask_path is not None or not raster.valid_mask.all():
        mask_path = Path(mask_path if mask_path is not None
                         else depth_path.with_suffix(".mask"))
        mask_path.write_bytes(raster.valid_mask.astype(np.uint8).tobytes())
        meta["valid_mask_path"] = mask_path.name
    meta_path.write_text(json.dumps(meta, indent=2))


def read_depth_raster(depth_path, meta_path) -> DepthRaster:
    depth_path, meta_path = Path(depth_path), Path(meta_path)
    meta = json.loads(meta_path.read_text())
    w, h = int(meta["width"]), int(meta["height"])
    raw = np.frombuffer(depth_path.read_bytes(), dtype="<f4")
    if raw.size != w * h:
        raise InvariantViolationError(
            f"depth payload has {raw.size} values, expected {w * h}")
    depth = raw.reshape(h, w).astype(np.float64) * float(meta.get("depth_scale", 1.0))
    if "valid_mask_path" in meta:
        mask_raw = np.frombuffer(
            (meta_path.parent / meta["valid_mask_path"]).read_bytes(), np.uint8)
        if mask_raw.size != w * h:
            raise InvariantViolationError("valid mask size mismatch")
        mask = mask_raw.reshape(h, w) != 0
    else:
        mask = np.ones((h, w), bool)
    return DepthRaster(w, h, depth, float(meta["fx"]), float(meta["fy"]),
                       float(meta["cx"]), float(meta["cy"]), mask)


def write_ply(cloud: LabeledPointCloud, path):
    """ASCII PLY with x,y,z and an integer `label` property."""
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
             "property float x", "property float y", "property float z",
             "property int label", "end_header"]
    for p, lab in zip(cloud.points, cloud.labels):
        lines.append(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {int(lab)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path) -> LabeledPointCloud:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != "ply":
        raise InvariantViolationError(f"{path}: not a PLY file")
    count = 0
    props: list[str] = []
    body_at = None
    for i, line in enumerate(text[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "element" and tok[1] == "vertex":
            count = int(tok[2])
        elif tok[0] == "property":
            props.append(tok[-1])
        elif tok[0] == "end_header":
            body_at = i + 1
            break
    if body_at is None:
        raise InvariantViolationError(f"{path}: missing end_header")
    has_label = "label" in props
    cols = {name: j for j, name in enumerate(props)}
    pts = np.zeros((count, 3), np.float64)
    labels = np.full(count, BACKGROUND, np.int32)
    for r in range(count):
        tok = text[body_at + r].split()
        pts[r] = [float(tok[cols["x"]]), float(tok[cols["y"]]), float(tok[cols["z"]])]
        if has_label:
            labels[r] = int(tok[cols["label"]])
    return LabeledPointCloud(pts, labels)
