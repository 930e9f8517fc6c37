"""Sparse structured latents over a cubic voxel grid.

A structured latent is a set of (position, feature) pairs: integer voxel
coordinates on a K^3 grid, each carrying a C-channel float32 feature row.
Canonical order is lexicographic by (x, y, z); all serialization and
equality-sensitive paths require it.

Dense occupancy grids encode active/inactive as +1/-1 float cells with decode
threshold 0.0, symmetric around the flow sampler's zero-mean noise. The flat
cell layout is x-fastest: index = x + K*y + K^2*z. That layout is the one
binary convention shared with the generator wire protocol.

All container types are immutable after construction (backing arrays are
marked read-only), so values can be shared freely across threads.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    DuplicatePositionError,
    InvariantViolationError,
    OutOfBoundsError,
    TruncatedFileError,
    VersionMismatchError,
    WindowOutOfGridError,
)

__all__ = [
    "EMPTY", "PRIOR", "GENERATED", "LANDMARK",
    "StructuredLatent", "DenseOccupancy", "SceneState",
    "canonicalize", "to_dense", "from_dense", "window",
    "write_slat", "read_slat", "flatten_cells", "unflatten_cells",
]

# Scene-state voxel tags.
EMPTY = 0       # nothing known; regenerable
PRIOR = 1       # occupancy known from the spatial prior, features still zero
GENERATED = 2   # occupancy and features produced by a completed region
LANDMARK = 3    # frozen, independently generated landmark content

_SLAT_MAGIC = b"SLAT"
_SLAT_VERSION = 1


def _as_positions(positions) -> np.ndarray:
    pos = np.asarray(positions, dtype=np.int32)
    if pos.size == 0:
        return pos.reshape(0, 3)
    if pos.ndim != 2 or pos.shape[1] != 3:
        raise InvariantViolationError(f"positions must be (L, 3), got {pos.shape}")
    return pos


def _as_features(features, length: int, channels: int | None) -> np.ndarray:
    feats = np.asarray(features, dtype=np.float32)
    if feats.size == 0:
        if channels is None:
            raise InvariantViolationError("empty latent needs an explicit channel count")
        feats = feats.reshape(0, channels)
    if feats.ndim != 2:
        raise InvariantViolationError(f"features must be (L, C), got {feats.shape}")
    if feats.shape[0] != length:
        raise InvariantViolationError(
            f"feature rows ({feats.shape[0]}) != positions ({length})")
    if channels is not None and feats.shape[1] != channels:
        raise InvariantViolationError(
            f"feature channels ({feats.shape[1]}) != declared ({channels})")
    if not np.isfinite(feats).all():
        raise InvariantViolationError("features must be finite (no NaN/Inf)")
    return feats


def _check_bounds(positions: np.ndarray, resolution: int):
    if positions.size and (positions.min() < 0 or positions.max() >= resolution):
        bad = positions[(positions < 0).any(axis=1) | (positions >= resolution).any(axis=1)]
        raise OutOfBoundsError(
            f"{len(bad)} positions outside [0, {resolution})^3, first: {bad[0].tolist()}")


def _lex_order(positions: np.ndarray) -> np.ndarray:
    # lexsort keys: last key is primary -> (z, y, x) yields x-major order
    return np.lexsort((positions[:, 2], positions[:, 1], positions[:, 0]))


def _is_sorted_unique(positions: np.ndarray) -> bool:
    if len(positions) < 2:
        return True
    a, b = positions[:-1], positions[1:]
    gt = (b[:, 0] > a[:, 0]) | (
        (b[:, 0] == a[:, 0]) & ((b[:, 1] > a[:, 1]) | (
            (b[:, 1] == a[:, 1]) & (b[:, 2] > a[:, 2]))))
    return bool(gt.all())


@dataclass(frozen=True)
class StructuredLatent:
    """Sparse (position, feature) set on a K^3 grid.

    Positions may be in any order at construction; `canonicalize` returns the
    lexicographically sorted equivalent. Duplicates and out-of-bounds
    positions are rejected here, not deferred.
    """

    resolution: int
    positions: np.ndarray   # (L, 3) int32
    features: np.ndarray    # (L, C) float32
    channels: int = field(default=0)

    def __post_init__(self):
        if self.resolution <= 0:
            raise InvariantViolationError(f"resolution must be positive, got {self.resolution}")
        pos = _as_positions(self.positions)
        feats = _as_features(self.features, len(pos), self.channels or None)
        if self.channels == 0:
            object.__setattr__(self, "channels", feats.shape[1])
        _check_bounds(pos, self.resolution)
        if len(pos) > 1:
            flat = self._flat_index(pos)
            uniq = np.unique(flat)
            if len(uniq) != len(flat):
                raise DuplicatePositionError(
                    f"{len(flat) - len(uniq)} duplicate voxel positions")
        pos = np.ascontiguousarray(pos)
        feats = np.ascontiguousarray(feats)
        pos.setflags(write=False)
        feats.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "features", feats)

    def _flat_index(self, pos: np.ndarray) -> np.ndarray:
        k = np.int64(self.resolution)
        p = pos.astype(np.int64)
        return p[:, 0] + k * p[:, 1] + k * k * p[:, 2]

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def is_canonical(self) -> bool:
        return _is_sorted_unique(self.positions)

    @classmethod
    def empty(cls, resolution: int, channels: int) -> "StructuredLatent":
        return cls(resolution, np.zeros((0, 3), np.int32),
                   np.zeros((0, channels), np.float32), channels)


@dataclass(frozen=True)
class DenseOccupancy:
    """K^3 float cells, flat x-fastest; sign encodes occupancy (>0 active)."""

    resolution: int
    cells: np.ndarray  # (K^3,) float32

    def __post_init__(self):
        if self.resolution <= 0:
            raise InvariantViolationError("resolution must be positive")
        cells = np.asarray(self.cells, dtype=np.float32).reshape(-1)
        if cells.size != self.resolution ** 3:
            raise InvariantViolationError(
                f"cell count {cells.size} != {self.resolution}^3")
        if not np.isfinite(cells).all():
            raise InvariantViolationError("cells must be finite")
        cells = np.ascontiguousarray(cells)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)


@dataclass(frozen=True)
class SceneState:
    """Per-voxel provenance tags for the scene grid.

    tags is (M, M, M) uint8 indexed [x, y, z]; landmark_ids is int32 with the
    instance id where the tag is LANDMARK and -1 elsewhere.
    """

    resolution: int
    tags: np.ndarray
    landmark_ids: np.ndarray

    def __post_init__(self):
        m = self.resolution
        tags = np.asarray(self.tags, dtype=np.uint8)
        ids = np.asarray(self.landmark_ids, dtype=np.int32)
        if tags.shape != (m, m, m) or ids.shape != (m, m, m):
            raise InvariantViolationError(
                f"state arrays must be ({m},{m},{m}), got {tags.shape}, {ids.shape}")
        if tags.max(initial=0) > LANDMARK:
            raise InvariantViolationError("unknown state tag value")
        lm = tags == LANDMARK
        if (ids[lm] < 0).any() or (ids[~lm] != -1).any():
            raise InvariantViolationError("landmark_id present iff tag is LANDMARK")
        tags = np.ascontiguousarray(tags)
        ids = np.ascontiguousarray(ids)
        tags.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "landmark_ids", ids)

    @classmethod
    def empty(cls, resolution: int) -> "SceneState":
        m = resolution
        return cls(m, np.zeros((m, m, m), np.uint8), np.full((m, m, m), -1, np.int32))

    def mutable_copy(self) -> tuple[np.ndarray, np.ndarray]:
        return self.tags.copy(), self.landmark_ids.copy()


def canonicalize(latent: StructuredLatent) -> StructuredLatent:
    """Sort positions lexicographically by (x, y, z), features in lockstep.

    Idempotent; duplicate/out-of-bounds entries were already rejected at
    construction.
    """
    if latent.is_canonical:
        return latent
    order = _lex_order(latent.positions)
    return StructuredLatent(latent.resolution, latent.positions[order],
                            latent.features[order], latent.channels)


def flatten_cells(grid_xyz: np.ndarray) -> np.ndarray:
    """(K,K,K) array indexed [x,y,z] -> flat x-fastest cell buffer."""
    return np.ascontiguousarray(grid_xyz.transpose(2, 1, 0)).reshape(-1)


def unflatten_cells(cells: np.ndarray, resolution: int) -> np.ndarray:
    """Flat x-fastest cells -> (K,K,K) array indexed [x,y,z]."""
    k = resolution
    return cells.reshape(k, k, k).transpose(2, 1, 0)


def to_dense(latent: StructuredLatent) -> DenseOccupancy:
    """+1 at each active position, -1 elsewhere."""
    k = latent.resolution
    cells = np.full(k ** 3, -1.0, dtype=np.float32)
    if len(latent):
        cells[latent._flat_index(latent.positions)] = 1.0
    return DenseOccupancy(k, cells)


def from_dense(grid: DenseOccupancy, threshold: float = 0.0) -> np.ndarray:
    """Positions where cell value > threshold, in canonical order."""
    k = np.int64(grid.resolution)
    idx = np.nonzero(grid.cells > threshold)[0]
    pos = np.empty((len(idx), 3), dtype=np.int32)
    pos[:, 0] = idx % k
    pos[:, 1] = (idx // k) % k
    pos[:, 2] = idx // (k * k)
    return pos[_lex_order(pos)] if len(pos) else pos


def window(latent: StructuredLatent, origin, shape) -> StructuredLatent:
    """Extract entries with origin <= p < origin+shape, rebased to the window.

    The returned resolution is max(shape) so rectangular edge patches still
    produce a valid cubic grid bound.
    """
    origin = np.asarray(origin, dtype=np.int64)
    shape = np.asarray(shape, dtype=np.int64)
    if origin.shape != (3,) or shape.shape != (3,):
        raise WindowOutOfGridError("origin and shape must be integer triples")
    m = latent.resolution
    if (origin < 0).any() or (shape <= 0).any() or (origin + shape > m).any():
        raise WindowOutOfGridError(
            f"window {origin.tolist()}+{shape.tolist()} outside [0, {m})^3")
    pos = latent.positions.astype(np.int64)
    inside = ((pos >= origin) & (pos < origin + shape)).all(axis=1)
    sub = (pos[inside] - origin).astype(np.int32)
    return StructuredLatent(int(shape.max()), sub, latent.features[inside],
                            latent.channels)


def write_slat(latent: StructuredLatent, sink) -> None:
    """Write the SLAT binary format (little-endian).

    Layout: magic "SLAT", u32 version=1, u32 K, u32 C, u64 L, then L
    position records (u16 x, u16 y, u16 z), then L*C float32 features in
    position order. The latent must already be canonical.
    """
    if not latent.is_canonical:
        raise InvariantViolationError("latent must be canonicalized before write")
    if latent.resolution > 0xFFFF + 1:
        raise InvariantViolationError("resolution exceeds u16 position range")
    close = False
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        sink = open(sink, "wb")
        close = True
    try:
        sink.write(_SLAT_MAGIC)
        sink.write(struct.pack("<III Q", _SLAT_VERSION, latent.resolution,
                               latent.channels, len(latent)))
        sink.write(latent.positions.astype("<u2").tobytes())
        sink.write(latent.features.astype("<f4").tobytes())
    finally:
        if close:
            sink.close()


def read_slat(source) -> StructuredLatent:
    """Read and validate a SLAT file; rejects unsorted or malformed payloads."""
    close = False
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        source = open(source, "rb")
        close = True
    try:
        head = source.read(4)
        if len(head) < 4:
            raise TruncatedFileError("missing magic")
        if head != _SLAT_MAGIC:
            raise BadMagicError(f"bad magic {head!r}")
        meta = source.read(struct.calcsize("<III Q"))
        if len(meta) < struct.calcsize("<III Q"):
            raise TruncatedFileError("truncated header")
        version, k, c, length = struct.unpack("<III Q", meta)
        if version != _SLAT_VERSION:
            raise VersionMismatchError(f"unsupported version {version}")
        if k == 0 or c == 0:
            raise InvariantViolationError("zero resolution or channel count")
        pos_bytes = source.read(length * 6)
        if len(pos_bytes) < length * 6:
            raise TruncatedFileError("truncated position records")
        feat_bytes = source.read(length * c * 4)
        if len(feat_bytes) < length * c * 4:
            raise TruncatedFileError("truncated feature payload")
        positions = np.frombuffer(pos_bytes, dtype="<u2").reshape(length, 3).astype(np.int32)
        features = np.frombuffer(feat_bytes, dtype="<f4").reshape(length, c)
        if not _is_sorted_unique(positions):
            raise InvariantViolationError("positions not canonical-sorted")
        return StructuredLatent(int(k), positions, features, int(c))
    finally:
        if close:
            source.close()
