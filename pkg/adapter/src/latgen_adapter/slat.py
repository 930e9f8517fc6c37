"""Reader/writer for the SLAT sparse-latent interchange format.

Little-endian layout: magic "SLAT", u32 version=1, u32 K, u32 C, u64 L,
L position records (u16 x, u16 y, u16 z), then L*C float32 feature rows in
record order. Positions must arrive sorted lexicographically by (x, y, z).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"SLAT"
VERSION = 1
_HEADER = struct.Struct("<III Q")


class SlatFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Slat:
    resolution: int
    channels: int
    positions: np.ndarray  # (L, 3) int32, canonical order
    features: np.ndarray   # (L, C) float32


def _sorted_lex(pos: np.ndarray) -> bool:
    if len(pos) < 2:
        return True
    a, b = pos[:-1], pos[1:]
    gt = (b[:, 0] > a[:, 0]) | ((b[:, 0] == a[:, 0]) & (
        (b[:, 1] > a[:, 1]) | ((b[:, 1] == a[:, 1]) & (b[:, 2] > a[:, 2]))))
    return bool(gt.all())


def read_slat(path) -> Slat:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise SlatFormatError(f"{path}: bad magic")
        header = f.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise SlatFormatError(f"{path}: truncated header")
        version, k, c, length = _HEADER.unpack(header)
        if version != VERSION:
            raise SlatFormatError(f"{path}: unsupported version {version}")
        pos_raw = f.read(length * 6)
        feat_raw = f.read(length * c * 4)
    if len(pos_raw) < length * 6 or len(feat_raw) < length * c * 4:
        raise SlatFormatError(f"{path}: truncated payload")
    positions = np.frombuffer(pos_raw, "<u2").reshape(length, 3).astype(np.int32)
    features = np.frombuffer(feat_raw, "<f4").reshape(length, c)
    if not _sorted_lex(positions):
        raise SlatFormatError(f"{path}: positions not canonical-sorted")
    return Slat(int(k), int(c), positions, features)


def write_slat(slat: Slat, path) -> None:
    if not _sorted_lex(slat.positions):
        raise SlatFormatError("positions must be canonical-sorted")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_HEADER.pack(VERSION, slat.resolution, slat.channels,
                             len(slat.positions)))
        f.write(np.ascontiguousarray(slat.positions, "<u2").tobytes())
        f.write(np.ascontiguousarray(slat.features, "<f4").tobytes())
