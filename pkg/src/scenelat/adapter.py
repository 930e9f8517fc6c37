"""Wire protocol client for external flow-field generators.

Envelopes are newline-delimited JSON over a byte stream (subprocess stdio or
TCP). Tensors travel as little-endian float32 buffers, base64-encoded, with
their shape declared alongside; dense region grids use the flat x-fastest
layout (index = x + sx*y + sx*sy*z) mapped onto the declared [sz, sy, sx]
C-order shape. Params are a flat string-to-scalar map. A response echoes the
request_id; an "error" object converts to RemoteError locally.

Defined ops: handshake, encode_image, eval_structure_field,
eval_latent_field, estimate_depth, detect_landmarks, decode_object. This
engine drives handshake and the two eval ops; the rest are part of the
protocol surface for full deployments.
"""

from __future__ import annotations

import base64
import json
import logging
import select
import socket
import subprocess
import time
from typing import Any, Optional

import numpy as np

from .errors import (
    AdapterTimeoutError,
    ProtocolError,
    RemoteError,
    ShapeMismatchError,
)
from .generators import GeneratorEndpoint

__all__ = ["AdapterClient", "AdapterField", "AdapterBackend",
           "encode_tensor", "decode_tensor", "call_adapter"]

log = logging.getLogger(__name__)

TENSOR_ENCODING = "f32le-b64"


def encode_tensor(name: str, array: np.ndarray) -> dict:
    arr = np.ascontiguousarray(array, dtype="<f4")
    return {"name": name, "shape": list(arr.shape),
            "encoding": TENSOR_ENCODING,
            "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def decode_tensor(obj: dict) -> np.ndarray:
    if obj.get("encoding") != TENSOR_ENCODING:
        raise ProtocolError(f"unsupported tensor encoding {obj.get('encoding')!r}")
    shape = tuple(int(s) for s in obj["shape"])
    raw = base64.b64decode(obj["data"])
    expect = int(np.prod(shape)) * 4 if shape else 4
    if len(raw) != expect:
        raise ProtocolError(
            f"tensor {obj.get('name')!r}: {len(raw)} bytes for shape {shape}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape)


class _SubprocessTransport:
    def __init__(self, argv, timeout: float):
        self.timeout = timeout
        self.proc = subprocess.Popen(list(argv), stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE, bufsize=0)

    def send_line(self, line: bytes):
        if self.proc.poll() is not None:
            raise ProtocolError(f"adapter exited with code {self.proc.returncode}")
        self.proc.stdin.write(line + b"\n")
        self.proc.stdin.flush()

    def recv_line(self) -> bytes:
        deadline = time.monotonic() + self.timeout
        buf = bytearray()
        raw = self.proc.stdout
        while b"\n" not in buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise AdapterTimeoutError(f"no response within {self.timeout:.0f}s")
            ready, _, _ = select.select([raw], [], [], min(remaining, 1.0))
            if not ready:
                if self.proc.poll() is not None:
                    raise ProtocolError(
                        f"adapter exited with code {self.proc.returncode}")
                continue
            chunk = raw.read(65536)
            if not chunk:
                raise ProtocolError("adapter closed its output stream")
            buf.extend(chunk)
        line, _, rest = bytes(buf).partition(b"\n")
        # one in-flight request per connection: trailing bytes are a bug
        if rest.strip():
            raise ProtocolError("unexpected trailing bytes after response line")
        return line

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
                self.proc.wait(timeout=5)
            except Exception:
                self.proc.kill()


class _TcpTransport:
    def __init__(self, address: str, timeout: float):
        host, _, port = address.rpartition(":")
        self.timeout = timeout
        self.sock = socket.create_connection((host or "127.0.0.1", int(port)),
                                             timeout=timeout)
        self.reader = self.sock.makefile("rb")

    def send_line(self, line: bytes):
        self.sock.sendall(line + b"\n")

    def recv_line(self) -> bytes:
        self.sock.settimeout(self.timeout)
        try:
            line = self.reader.readline()
        except socket.timeout as exc:
            raise AdapterTimeoutError(
                f"no response within {self.timeout:.0f}s") from exc
        if not line:
            raise ProtocolError("adapter closed the connection")
        return line.rstrip(b"\n")

    def close(self):
        try:
            self.reader.close()
            self.sock.close()
        except OSError:
            pass


class AdapterClient:
    """Synchronous request/response client, one in-flight request at a time."""

    def __init__(self, transport):
        self._transport = transport
        self._counter = 0

    @classmethod
    def from_endpoint(cls, endpoint: GeneratorEndpoint) -> "AdapterClient":
        if endpoint.command:
            return cls(_SubprocessTransport(endpoint.command, endpoint.timeout))
        return cls(_TcpTransport(endpoint.address, endpoint.timeout))

    def call(self, op: str, tensors: Optional[dict[str, np.ndarray]] = None,
             params: Optional[dict[str, Any]] = None) -> tuple[dict[str, np.ndarray], dict]:
        self._counter += 1
        request_id = f"req-{self._counter:06d}"
        envelope = {
            "op": op,
            "request_id": request_id,
            "tensors": [encode_tensor(k, v) for k, v in (tensors or {}).items()],
            "params": params or {},
        }
        self._transport.send_line(json.dumps(envelope).encode("utf-8"))
        line = self._transport.recv_line()
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"invalid JSON from adapter: {exc}") from exc
        if reply.get("request_id") != request_id:
            raise ProtocolError(
                f"request_id mismatch: sent {request_id}, got {reply.get('request_id')}")
        if "error" in reply and reply["error"]:
            err = reply["error"]
            raise RemoteError(err.get("message", "remote failure"),
                              remote_type=err.get("type", ""))
        out_tensors = {t["name"]: decode_tensor(t)
                       for t in reply.get("tensors", [])}
        return out_tensors, reply.get("params", {})

    def close(self):
        self._transport.close()


def call_adapter(endpoint: GeneratorEndpoint, envelope: dict) -> dict:
    """One-shot raw envelope exchange against an endpoint descriptor."""
    client = AdapterClient.from_endpoint(endpoint)
    try:
        tensors = {t["name"]: decode_tensor(t) for t in envelope.get("tensors", [])}
        out_t, out_p = client.call(envelope["op"], tensors,
                                   envelope.get("params", {}))
        return {"op": envelope["op"],
                "tensors": [encode_tensor(k, v) for k, v in out_t.items()],
                "params": out_p}
    finally:
        client.close()


class AdapterField:
    """FlowField adapter: forwards evaluations over the wire.

    Dense region grids travel with a declared [sz, sy, sx] shape (C-order,
    x fastest) regardless of how the engine holds them in memory; wire_shape
    controls that reshaping. Bytes are unchanged either way.
    """

    def __init__(self, client: AdapterClient, op: str, params: dict,
                 extra_tensors: Optional[dict[str, np.ndarray]] = None,
                 wire_shape: Optional[tuple[int, ...]] = None):
        self.client = client
        self.op = op
        self.params = dict(params)
        self.extra_tensors = dict(extra_tensors or {})
        self.wire_shape = tuple(wire_shape) if wire_shape else None

    def evaluate(self, x: np.ndarray, t: float, condition=None) -> np.ndarray:
        sent = x.reshape(self.wire_shape) if self.wire_shape else x
        tensors = {"x": sent, **self.extra_tensors}
        out, _ = self.client.call(self.op, tensors, {**self.params, "t": float(t)})
        if "v" not in out:
            raise ProtocolError(f"{self.op} response missing tensor 'v'")
        v = out["v"]
        if tuple(v.shape) != tuple(sent.shape):
            raise ShapeMismatchError(
                f"{self.op} returned shape {v.shape}, expected {tuple(sent.shape)}")
        return v.astype(np.float32, copy=False).reshape(np.shape(x))


class AdapterBackend:
    """Generator backend speaking the envelope protocol."""

    def __init__(self, endpoint: GeneratorEndpoint):
        self.client = AdapterClient.from_endpoint(endpoint)
        _, params = self.client.call("handshake")
        try:
            self.sigma_min = float(params["sigma_min"])
            self.channels = int(params["channels"])
            self.region_resolution = int(params["resolution"])
        except KeyError as exc:
            raise ProtocolError(f"handshake missing {exc}") from exc
        log.info("adapter handshake: sigma_min=%g channels=%d resolution=%d",
                 self.sigma_min, self.channels, self.region_resolution)

    @staticmethod
    def _region_params(origin, shape, crop_rect, guidance) -> dict:
        u0, v0, w, h = crop_rect
        return {"origin_x": int(origin[0]), "origin_y": int(origin[1]),
                "origin_z": int(origin[2]),
                "shape_x": int(shape[0]), "shape_y": int(shape[1]),
                "shape_z": int(shape[2]),
                "crop_u0": int(u0), "crop_v0": int(v0),
                "crop_w": int(w), "crop_h": int(h),
                "guidance": float(guidance)}

    def structure_field(self, origin, shape, crop_rect, guidance) -> AdapterField:
        wire = (int(shape[2]), int(shape[1]), int(shape[0]))  # x-fastest C-order
        return AdapterField(self.client, "eval_structure_field",
                            self._region_params(origin, shape, crop_rect, guidance),
                            wire_shape=wire)

    def latent_field(self, origin, shape, positions, crop_rect, guidance) -> AdapterField:
        params = self._region_params(origin, shape, crop_rect, guidance)
        pos = np.asarray(positions, np.float32)
        return AdapterField(self.client, "eval_latent_field", params,
                            {"positions": pos})

    def close(self):
        self.client.close()
