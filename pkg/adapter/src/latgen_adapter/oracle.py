"""Exact-transport oracle fields toward a target latent.

The velocity of the schedule's straight interpolation through (x, t) is

    v = (1 - s) * ((x - (1 - t) * target) / (s + (1 - s) * t)) - target

with s the minimum noise scale. The engine-side builtin oracle evaluates the
same expression in the same float32 operation order, which is what makes
wire-served runs byte-identical to builtin runs.

Structure targets are the ±1 occupancy of the target latent windowed at the
requested region origin, flattened x-fastest (index = x + sx*y + sx*sy*z).
Feature targets are the target's rows looked up at origin + positions, zeros
for positions outside the target.
"""

from __future__ import annotations

import numpy as np

from .slat import Slat


class OracleStore:
    def __init__(self, target: Slat, sigma_min: float = 0.0):
        self.target = target
        self.sigma_min = float(sigma_min)
        m = target.resolution
        p = target.positions.astype(np.int64)
        keys = p[:, 0] * m * m + p[:, 1] * m + p[:, 2]
        order = np.argsort(keys)
        self._keys = keys[order]
        self._rows = target.features[order]

    def window_cells(self, origin, shape) -> np.ndarray:
        """±1 occupancy of the target inside the region box, flat x-fastest."""
        o = np.asarray(origin, np.int64)
        s = np.asarray(shape, np.int64)
        p = self.target.positions.astype(np.int64)
        inside = ((p >= o) & (p < o + s)).all(axis=1)
        local = p[inside] - o
        cells = np.full(int(s[0] * s[1] * s[2]), -1.0, dtype=np.float32)
        cells[local[:, 0] + s[0] * local[:, 1] + s[0] * s[1] * local[:, 2]] = 1.0
        return cells

    def lookup_rows(self, scene_positions: np.ndarray) -> np.ndarray:
        m = self.target.resolution
        p = np.asarray(scene_positions, np.int64)
        keys = p[:, 0] * m * m + p[:, 1] * m + p[:, 2]
        idx = np.searchsorted(self._keys, keys)
        idx_safe = np.minimum(idx, max(len(self._keys) - 1, 0))
        out = np.zeros((len(keys), self.target.channels), np.float32)
        if len(self._keys):
            hit = self._keys[idx_safe] == keys
            out[hit] = self._rows[idx_safe[hit]]
        return out

    def velocity(self, x: np.ndarray, t: float, target: np.ndarray) -> np.ndarray:
        s = self.sigma_min
        denom = s + (1.0 - s) * t
        if denom < 1e-12:
            raise ZeroDivisionError(f"schedule coefficient underflow at t={t}")
        eps_hat = (x - (1.0 - t) * target) / denom
        return (1.0 - s) * eps_hat - target
