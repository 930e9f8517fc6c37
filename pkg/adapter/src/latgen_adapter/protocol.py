"""Envelope codec: newline-delimited JSON with base64 float32 tensors."""

from __future__ import annotations

import base64
import json

import numpy as np

TENSOR_ENCODING = "f32le-b64"


class EnvelopeError(ValueError):
    pass


def encode_tensor(name: str, array: np.ndarray) -> dict:
    arr = np.ascontiguousarray(array, dtype="<f4")
    return {"name": name, "shape": list(arr.shape), "encoding": TENSOR_ENCODING,
            "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def decode_tensor(obj: dict) -> np.ndarray:
    if obj.get("encoding") != TENSOR_ENCODING:
        raise EnvelopeError(f"unsupported encoding {obj.get('encoding')!r}")
    shape = tuple(int(s) for s in obj["shape"])
    raw = base64.b64decode(obj["data"])
    count = 1
    for s in shape:
        count *= s
    if len(raw) != count * 4:
        raise EnvelopeError(f"tensor {obj.get('name')!r}: payload/shape mismatch")
    return np.frombuffer(raw, "<f4").reshape(shape)


def parse_request(line: bytes | str) -> dict:
    try:
        req = json.loads(line)
    except json.JSONDecodeError as exc:
        raise EnvelopeError(f"invalid JSON: {exc}") from exc
    if not isinstance(req, dict) or "op" not in req or "request_id" not in req:
        raise EnvelopeError("request must carry op and request_id")
    req.setdefault("tensors", [])
    req.setdefault("params", {})
    return req


def response(request_id: str, op: str, tensors: dict[str, np.ndarray] | None = None,
             params: dict | None = None) -> str:
    return json.dumps({
        "op": op, "request_id": request_id,
        "tensors": [encode_tensor(k, v) for k, v in (tensors or {}).items()],
        "params": params or {},
    })


def error_response(request_id: str, op: str, err_type: str, message: str) -> str:
    return json.dumps({"op": op, "request_id": request_id, "tensors": [],
                       "params": {}, "error": {"type": err_type,
                                               "message": message}})
