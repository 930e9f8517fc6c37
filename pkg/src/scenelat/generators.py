"""Flow-field providers: builtin mock and oracle backends, endpoint plumbing.

A backend hands the pipeline one flow field per completion stage. The mock
backend produces deterministic pseudo-random drift fields (smoke tests, no
correctness claim beyond determinism and shape closure); the oracle backend
produces exact-transport fields toward a fixed scene-level target latent, so
completions are checkable against closed-form expectations. Real generators
attach through the wire adapter, constructed elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .flow import StraightPathField
from .latent import StructuredLatent
from .rng import NoiseStream
from .tiler import region_cells_from_positions

__all__ = [
    "GeneratorEndpoint", "MockBackend", "OracleBackend",
    "deterministic_feature_rows", "DriftField",
]

# Spatial-hash feature constants; all integer math, so any IEEE-754
# implementation reproduces the same float32 rows bit-for-bit.
_HX, _HY, _HZ, _HC = 73856093, 19349663, 83492791, 2654435761
_HMOD = 2048
_HSCALE = 1024.0


def deterministic_feature_rows(scene_positions: np.ndarray, channels: int) -> np.ndarray:
    """Reference feature rows for oracle targets: hash(position, channel).

    value = ((x*HX + y*HY + z*HZ + (c+1)*HC) mod 2048) / 1024 - 1, exactly
    representable in float32.
    """
    p = np.asarray(scene_positions, np.int64)
    base = p[:, 0] * _HX + p[:, 1] * _HY + p[:, 2] * _HZ
    chan = (np.arange(1, channels + 1, dtype=np.int64)) * _HC
    mixed = (base[:, None] + chan[None, :]) % _HMOD
    return mixed.astype(np.float32) / _HSCALE - 1.0


@dataclass(frozen=True)
class GeneratorEndpoint:
    """Descriptor of a flow-field provider."""

    kind: str  # "mock" | "oracle" | "adapter"
    command: Optional[tuple[str, ...]] = None  # adapter subprocess argv
    address: Optional[str] = None              # adapter host:port
    timeout: float = 300.0

    def __post_init__(self):
        if self.kind not in ("mock", "oracle", "adapter"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.kind == "adapter" and not (self.command or self.address):
            raise ValueError("adapter endpoint needs a command or an address")

    def to_json(self) -> dict:
        return {"kind": self.kind,
                "command": list(self.command) if self.command else None,
                "address": self.address, "timeout": self.timeout}

    @classmethod
    def from_json(cls, obj) -> "GeneratorEndpoint":
        cmd = obj.get("command")
        return cls(obj["kind"], tuple(cmd) if cmd else None,
                   obj.get("address"), float(obj.get("timeout", 300.0)))


class DriftField:
    """v(x, t) = x - pattern: Euler flow decays x toward the fixed pattern.

    The pattern is drawn once per (tag, shape) from a seeded stream, so the
    field is a pure function of its constructor arguments.
    """

    def __init__(self, seed: int, tag: tuple, bias: float = 0.0, spread: float = 1.0):
        self._seed = seed
        self._tag = tag
        self.bias = bias
        self.spread = spread
        self._patterns: dict[tuple, np.ndarray] = {}

    def _pattern(self, shape) -> np.ndarray:
        key = tuple(shape)
        got = self._patterns.get(key)
        if got is None:
            stream = NoiseStream(self._seed).child("drift-pattern", *self._tag,
                                                   *[int(s) for s in shape])
            got = self.spread * stream.standard_normal(shape) + self.bias
            self._patterns[key] = got
        return got

    def evaluate(self, x: np.ndarray, t: float, condition=None) -> np.ndarray:
        return x - self._pattern(x.shape)


class MockBackend:
    """Deterministic stand-in generator: no model, just seeded drift fields.

    The structure field's pattern is biased negative so decoded occupancy
    stays sparse enough for the feature stage to be cheap.
    """

    def __init__(self, seed: int = 0, channels: int = 8,
                 region_resolution: int = 64):
        self.seed = int(seed)
        self.sigma_min = 0.0
        self.channels = int(channels)
        self.region_resolution = int(region_resolution)

    def structure_field(self, origin, shape, crop_rect, guidance) -> DriftField:
        return DriftField(self.seed, ("structure", *origin), bias=-1.6, spread=0.6)

    def latent_field(self, origin, shape, positions, crop_rect, guidance) -> DriftField:
        return DriftField(self.seed, ("features", *origin))

    def close(self):
        pass


class OracleBackend:
    """Exact-transport generator toward a scene-level target latent.

    Structure fields pull toward the target occupancy windowed at the region
    origin; feature fields pull toward the target's feature rows looked up at
    the completed scene positions (zeros where a position is not in the
    target). Mirrors the wire-protocol mock adapter bit-for-bit.
    """

    def __init__(self, target: StructuredLatent, region_resolution: int = 64):
        self.target = target
        self.sigma_min = 0.0
        self.channels = target.channels
        self.region_resolution = int(region_resolution)
        m = target.resolution
        p = target.positions.astype(np.int64)
        keys = p[:, 0] * m * m + p[:, 1] * m + p[:, 2]
        order = np.argsort(keys)
        self._keys = keys[order]
        self._rows = target.features[order]

    def _window_cells(self, origin, shape) -> np.ndarray:
        o = np.asarray(origin, np.int64)
        s = np.asarray(shape, np.int64)
        p = self.target.positions.astype(np.int64)
        inside = ((p >= o) & (p < o + s)).all(axis=1)
        return region_cells_from_positions((p[inside] - o).astype(np.int32),
                                           tuple(int(v) for v in s))

    def lookup_rows(self, scene_positions: np.ndarray) -> np.ndarray:
        """Target feature rows at the given scene positions; zeros if absent."""
        m = self.target.resolution
        p = np.asarray(scene_positions, np.int64)
        keys = p[:, 0] * m * m + p[:, 1] * m + p[:, 2]
        idx = np.searchsorted(self._keys, keys)
        idx_safe = np.minimum(idx, max(len(self._keys) - 1, 0))
        out = np.zeros((len(keys), self.channels), np.float32)
        if len(self._keys):
            hit = self._keys[idx_safe] == keys
            out[hit] = self._rows[idx_safe[hit]]
        return out

    def structure_field(self, origin, shape, crop_rect, guidance) -> StraightPathField:
        return StraightPathField(self._window_cells(origin, shape), self.sigma_min)

    def latent_field(self, origin, shape, positions, crop_rect, guidance) -> StraightPathField:
        scene_pos = np.asarray(positions, np.int64) + np.asarray(origin, np.int64)
        return StraightPathField(self.lookup_rows(scene_pos), self.sigma_min)

    def close(self):
        pass
