"""Write-back of completed regions into the scene latent.

Fusion is sequential in plan order and value-monotone: entries are only ever
added, never removed, and content already present wins over later arrivals.
The completion masks already constrain later regions to match existing
content, so keeping the scene copy makes fusion order-stable.

Landmark voxels are terminal: their entries are never replaced, whether the
landmark is fully contained in the fusing region or straddles its boundary.
Region output at voxels of a straddled (partial) landmark is dropped
outright, preserving the landmark exactly as generated.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    IncompleteSceneError,
    InvariantViolationError,
    OriginOutOfGridError,
)
from .latent import (
    EMPTY,
    GENERATED,
    LANDMARK,
    PRIOR,
    SceneState,
    StructuredLatent,
    canonicalize,
)

__all__ = ["classify_partial_landmarks", "fuse_region", "finalize_scene"]


def classify_partial_landmarks(origin, patch_shape, state: SceneState) -> set[int]:
    """Ids of landmarks that intersect the region without being contained."""
    o = np.asarray(origin, np.int64)
    s = np.asarray(patch_shape, np.int64)
    box = state.tags[o[0]:o[0] + s[0], o[1]:o[1] + s[1], o[2]:o[2] + s[2]]
    ids_box = state.landmark_ids[o[0]:o[0] + s[0], o[1]:o[1] + s[1],
                                 o[2]:o[2] + s[2]]
    inside = np.unique(ids_box[box == LANDMARK])
    partial = set()
    for lid in inside.tolist():
        total = int((state.landmark_ids == lid).sum())
        contained = int((ids_box == lid).sum())
        if contained < total:
            partial.add(int(lid))
    return partial


def _scene_keys(positions: np.ndarray, resolution: int) -> np.ndarray:
    r = np.int64(resolution)
    p = positions.astype(np.int64)
    return p[:, 0] * r * r + p[:, 1] * r + p[:, 2]


def fuse_region(scene: StructuredLatent, state: SceneState,
                region: StructuredLatent, origin,
                partial_ids: set[int]) -> tuple[StructuredLatent, SceneState]:
    """Merge one completed region into the scene at `origin`.

    Per region entry at scene voxel q:
      - LANDMARK state: scene entry kept (dropped outright when the landmark
        is partial in this region; identical content otherwise).
      - GENERATED state: scene entry kept (earlier region wins).
      - PRIOR state: region features replace the placeholder zeros.
      - EMPTY state: entry appended.
    PRIOR and EMPTY voxels transition to GENERATED.
    """
    origin = np.asarray(origin, np.int64)
    m = scene.resolution
    if (origin < 0).any() or (origin >= m).any():
        raise OriginOutOfGridError(f"origin {origin.tolist()} outside [0, {m})^3")
    if not scene.is_canonical:
        raise InvariantViolationError("scene latent must be canonical before fusion")
    if len(region) == 0:
        return scene, state

    q = region.positions.astype(np.int64) + origin
    if q.max() >= m:
        raise OriginOutOfGridError(
            f"region at {origin.tolist()} maps entries outside [0, {m})^3")

    tags, ids = state.mutable_copy()
    qx, qy, qz = q[:, 0], q[:, 1], q[:, 2]
    tag_at = tags[qx, qy, qz]
    id_at = ids[qx, qy, qz]

    if partial_ids:
        in_partial = (tag_at == LANDMARK) & np.isin(id_at, sorted(partial_ids))
    else:
        in_partial = np.zeros(len(q), bool)
    keep_scene = (tag_at == LANDMARK) | (tag_at == GENERATED) | in_partial
    overwrite = tag_at == PRIOR
    append = tag_at == EMPTY

    new_feats = scene.features.copy()
    if overwrite.any():
        scene_keys = _scene_keys(scene.positions, m)
        want = _scene_keys(q[overwrite].astype(np.int32), m)
        row = np.searchsorted(scene_keys, want)
        if (row >= len(scene_keys)).any() or (scene_keys[np.minimum(row, len(scene_keys) - 1)] != want).any():
            raise InvariantViolationError(
                "state marks PRIOR voxels with no scene latent entry")
        new_feats[row] = region.features[overwrite]
        ow = q[overwrite]
        tags[ow[:, 0], ow[:, 1], ow[:, 2]] = GENERATED

    if append.any():
        ap = q[append]
        tags[ap[:, 0], ap[:, 1], ap[:, 2]] = GENERATED
        positions = np.concatenate([scene.positions, ap.astype(np.int32)])
        features = np.concatenate([new_feats, region.features[append]])
    else:
        positions = scene.positions
        features = new_feats

    fused = canonicalize(StructuredLatent(m, positions, features, scene.channels))
    return fused, SceneState(m, tags, ids)


def finalize_scene(scene: StructuredLatent, state: SceneState) -> StructuredLatent:
    """Validate that every prior voxel was completed; return canonical scene."""
    remaining = np.argwhere(state.tags == PRIOR)
    if len(remaining):
        sample = [tuple(int(v) for v in p) for p in remaining[:10]]
        raise IncompleteSceneError(
            f"{len(remaining)} prior voxels never completed, e.g. {sample}",
            voxels=sample)
    scene = canonicalize(scene)
    occupied = int((state.tags != EMPTY).sum())
    if occupied != len(scene):
        raise IncompleteSceneError(
            f"state marks {occupied} occupied voxels but latent has {len(scene)}")
    return scene
