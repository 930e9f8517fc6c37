"""Seedable, splittable noise streams for the flow sampler.

Built on Philox4x64-10, a counter-based generator keyed by two 64-bit words:
word 0 is the run seed, word 1 a path hash identifying the stream. Child
streams derive their path hash from the parent's via BLAKE2b, so any
(seed, path) pair names the same stream on every machine and is independent
of how many sibling streams exist or in what order they are created.

Normal variates come from numpy's float32 ziggurat on the Philox stream,
which is the documented numpy method for ``standard_normal``. Streams are
consumed strictly sequentially by the sampler, so identical seeds give
bit-identical draws across runs and thread counts.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["NoiseStream"]

_MASK64 = (1 << 64) - 1


def _derive_path(parent: int, tags: tuple) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(parent.to_bytes(8, "little"))
    for tag in tags:
        if isinstance(tag, str):
            raw = b"s" + tag.encode("utf-8")
        elif isinstance(tag, (int, np.integer)):
            raw = b"i" + int(tag).to_bytes(16, "little", signed=True)
        else:
            raise TypeError(f"stream tag must be str or int, got {type(tag)!r}")
        h.update(len(raw).to_bytes(4, "little"))
        h.update(raw)
    return int.from_bytes(h.digest(), "little")


class NoiseStream:
    """One sequentially-consumed Gaussian noise stream."""

    def __init__(self, seed: int, path: int = 0):
        self.seed = int(seed) & _MASK64
        self.path = int(path) & _MASK64
        key = np.array([self.seed, self.path], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, *tags) -> "NoiseStream":
        """Derive an independent stream named by `tags` (str or int)."""
        if not tags:
            raise ValueError("child() needs at least one tag")
        return NoiseStream(self.seed, _derive_path(self.path, tags))

    def standard_normal(self, shape, dtype=np.float32) -> np.ndarray:
        """Draw i.i.d. N(0,1); advances the stream by the element count."""
        return self._gen.standard_normal(shape, dtype=dtype)

    @property
    def key_hex(self) -> str:
        """Stable identifier for run manifests: seed and path hash."""
        return f"{self.seed:016x}:{self.path:016x}"

    def __repr__(self):
        return f"NoiseStream({self.key_hex})"
