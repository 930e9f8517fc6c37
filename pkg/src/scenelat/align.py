"""Rigid registration of generated landmark geometry onto the scene cloud.

Point-to-point ICP: nearest-neighbour matching (exact, via a KD-tree) against
the target cloud, then the closed-form SVD orthogonal-Procrustes solve with
determinant correction for the rigid update. Exact matching is what makes the
per-iteration RMSE provably non-increasing; an approximate matcher would void
that invariant. Initialization aligns centroids; no rotation init (top-down
capture keeps gross misrotation out of scope).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateGeometryError,
    EmptyCloudError,
    InvariantViolationError,
    UnknownLandmarkError,
)
from .prior import LabeledPointCloud

__all__ = ["RigidTransform", "icp_align", "substitute_landmark"]

log = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 50
DEFAULT_TOL = 1e-7


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion p -> scale * R @ p + t.

    scale is 1.0 for true rigid motions; it departs from 1 only when ICP runs
    with allow_scale (generators normalize objects, so landmark substitution
    sometimes needs a similarity rather than an isometry).
    """

    rotation: np.ndarray     # (3, 3)
    translation: np.ndarray  # (3,)
    scale: float = 1.0

    def __post_init__(self):
        r = np.asarray(self.rotation, np.float64)
        t = np.asarray(self.translation, np.float64).reshape(3)
        if r.shape != (3, 3):
            raise InvariantViolationError("rotation must be 3x3")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-9):
            raise InvariantViolationError("rotation must be orthonormal")
        if not np.isclose(np.linalg.det(r), 1.0, atol=1e-9):
            raise InvariantViolationError("rotation must have det +1")
        if self.scale <= 0:
            raise InvariantViolationError("scale must be positive")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "scale", float(self.scale))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, np.float64)
        return self.scale * (pts @ self.rotation.T) + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self ∘ other)(p) = self(other(p))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.scale * (self.rotation @ other.translation) + self.translation,
            self.scale * other.scale)

    def inverse(self) -> "RigidTransform":
        inv_r = self.rotation.T
        return RigidTransform(inv_r, -(inv_r @ self.translation) / self.scale,
                              1.0 / self.scale)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))


def _procrustes(source: np.ndarray, target: np.ndarray,
                with_scale: bool = False) -> RigidTransform:
    """Least-squares rigid (or similarity) transform onto matched targets."""
    sc = source.mean(axis=0)
    tc = target.mean(axis=0)
    h = (source - sc).T @ (target - tc)
    u, s, vt = np.linalg.svd(h)
    rank = int(np.sum(s > s[0] * 1e-12)) if s[0] > 0 else 0
    if rank < 2:
        raise DegenerateGeometryError(
            "source correspondence covariance has rank < 2 (collinear points)")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    scale = 1.0
    if with_scale:
        # Umeyama: corrected singular-value trace over the source variance
        var = float(np.sum((source - sc) ** 2))
        scale = float(s[0] + s[1] + d * s[2]) / var
    return RigidTransform(rot, tc - scale * (rot @ sc), scale)


def icp_align(source, target, max_iters: int = DEFAULT_MAX_ITERS,
              tol: float = DEFAULT_TOL,
              allow_scale: bool = False) -> tuple[RigidTransform, float]:
    """Align source points onto target; returns cumulative transform and RMSE.

    Stops when the RMSE improvement drops below tol or max_iters is reached.
    allow_scale (off by default) additionally estimates a uniform scale each
    update, for landmark meshes produced in a normalized object frame.
    """
    source = np.asarray(source, np.float64).reshape(-1, 3)
    target = np.asarray(target, np.float64).reshape(-1, 3)
    if len(source) == 0 or len(target) == 0:
        raise EmptyCloudError("icp needs non-empty source and target")
    if len(source) < 3:
        raise DegenerateGeometryError("icp needs at least 3 source points")

    tree = cKDTree(target)
    scale0 = 1.0
    if allow_scale:
        # scale analog of centroid alignment: match RMS radii
        var_s = float(np.mean(np.sum((source - source.mean(axis=0)) ** 2, axis=1)))
        var_t = float(np.mean(np.sum((target - target.mean(axis=0)) ** 2, axis=1)))
        if var_s > 0 and var_t > 0:
            scale0 = float(np.sqrt(var_t / var_s))
    transform = RigidTransform(
        np.eye(3), target.mean(axis=0) - scale0 * source.mean(axis=0), scale0)
    moved = transform.apply(source)
    dist, nn = tree.query(moved)
    rmse = float(np.sqrt(np.mean(dist ** 2)))

    for _ in range(max_iters):
        step = _procrustes(moved, target[nn], with_scale=allow_scale)
        transform = step.compose(transform)
        moved = transform.apply(source)
        dist, nn = tree.query(moved)
        new_rmse = float(np.sqrt(np.mean(dist ** 2)))
        assert new_rmse <= rmse + 1e-12, "ICP RMSE increased"
        if rmse - new_rmse < tol:
            rmse = new_rmse
            break
        rmse = new_rmse
    return transform, rmse


def substitute_landmark(scene: LabeledPointCloud, landmark_id: int,
                        generated, transform: RigidTransform) -> LabeledPointCloud:
    """Swap a landmark's raw points for transform-aligned generated points.

    Background and other landmarks pass through untouched; an empty generated
    list removes the landmark (legal, logged as a warning).
    """
    keep = scene.labels != landmark_id
    if keep.all():
        raise UnknownLandmarkError(f"landmark id {landmark_id} not present in scene")
    generated = np.asarray(generated, np.float64).reshape(-1, 3)
    if len(generated) == 0:
        log.warning("landmark %d replaced by empty point set; region removed",
                    landmark_id)
        return LabeledPointCloud(scene.points[keep], scene.labels[keep])
    placed = transform.apply(generated)
    points = np.concatenate([scene.points[keep], placed])
    labels = np.concatenate([scene.labels[keep],
                             np.full(len(placed), landmark_id, np.int32)])
    return LabeledPointCloud(points, labels)
