"""Two-stage completion of one region: occupancy first, then features.

Stage one runs masked completion over the dense ±1 region grid and decodes
positions at the zero threshold; with a zero noise floor the preserved +1
cells survive bit-exactly, so known occupancy can only grow. If a generator
with a positive noise floor drops a known voxel anyway, the voxel is
re-inserted and counted as a deviation rather than silently lost: landmark
and overlap integrity outrank sampler freedom.

Stage two assembles the per-row feature tensor for the completed position
set, keeping rows whose features already exist and regenerating the rest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RowAlignmentError
from .flow import FlowConfig, FlowField, masked_complete
from .latent import StructuredLatent
from .rng import NoiseStream
from .tiler import (
    RegionContext,
    positions_from_region_cells,
    region_cells_from_positions,
)

__all__ = ["RegionStats", "complete_structure", "complete_features"]


@dataclass
class RegionStats:
    """Deviation counters surfaced in the run manifest."""

    reinserted_rows: int = 0


def _sort_key(positions: np.ndarray, resolution: int) -> np.ndarray:
    r = np.int64(resolution)
    p = positions.astype(np.int64)
    return p[:, 0] * r * r + p[:, 1] * r + p[:, 2]


def complete_structure(ctx: RegionContext, field_s: FlowField, cfg: FlowConfig,
                       rng: NoiseStream, stats: RegionStats | None = None) -> np.ndarray:
    """Complete region occupancy; returns canonical region-local positions."""
    known_cells = region_cells_from_positions(ctx.latent.positions, ctx.shape)
    condition = {"stage": "structure", "origin": ctx.origin, "shape": ctx.shape,
                 "guidance": cfg.guidance_structure, "crop_rect": ctx.image_crop_rect}
    out = masked_complete(known_cells, ctx.structure_mask, field_s, condition,
                          cfg, rng)
    positions = positions_from_region_cells(out, ctx.shape)

    known = ctx.latent.positions
    if len(known):
        res = max(ctx.shape)
        missing = np.setdiff1d(_sort_key(known, res), _sort_key(positions, res),
                               assume_unique=True)
        if len(missing):
            if stats is not None:
                stats.reinserted_rows += len(missing)
            r = np.int64(res)
            add = np.empty((len(missing), 3), np.int32)
            add[:, 0] = missing // (r * r)
            add[:, 1] = (missing // r) % r
            add[:, 2] = missing % r
            positions = np.concatenate([positions, add])
            order = np.lexsort((positions[:, 2], positions[:, 1], positions[:, 0]))
            positions = positions[order]
    return positions


def complete_features(ctx: RegionContext, positions: np.ndarray,
                      field_l: FlowField, cfg: FlowConfig,
                      rng: NoiseStream) -> StructuredLatent:
    """Complete per-row features for the completed position set.

    Rows whose position carries existing content (feature_mask False in the
    context) are preserved; every other row, including newly generated
    positions, is regenerated.
    """
    positions = np.asarray(positions, np.int32).reshape(-1, 3)
    channels = ctx.latent.channels
    res = max(ctx.shape)
    rows = len(positions)

    x_known = np.zeros((rows, channels), np.float32)
    row_mask = np.ones(rows, bool)

    keep = ~ctx.feature_mask
    if keep.any():
        if rows == 0:
            raise RowAlignmentError(
                f"{int(keep.sum())} known feature rows but no completed positions")
        kept_pos = ctx.latent.positions[keep]
        kept_feats = ctx.latent.features[keep]
        pos_keys = _sort_key(positions, res)
        kept_keys = _sort_key(kept_pos, res)
        idx = np.searchsorted(pos_keys, kept_keys)
        bad = (idx >= rows) | (pos_keys[np.minimum(idx, rows - 1)] != kept_keys)
        if bad.any():
            raise RowAlignmentError(
                f"{int(bad.sum())} known feature rows missing from the "
                f"completed position set")
        x_known[idx] = kept_feats
        row_mask[idx] = False

    mask = np.broadcast_to(row_mask[:, None], (rows, channels))
    condition = {"stage": "features", "origin": ctx.origin, "shape": ctx.shape,
                 "guidance": cfg.guidance_latent, "crop_rect": ctx.image_crop_rect,
                 "positions": positions}
    feats = masked_complete(x_known, mask, field_l, condition, cfg, rng)
    return StructuredLatent(res, positions, feats, channels)
