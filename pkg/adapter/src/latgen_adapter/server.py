"""Request loop and op dispatch.

One request, one response line, in order; state between requests is limited
to a condition cache keyed by image content hash. Failures inside a handler
become error envelopes carrying the handler's message; the loop itself only
dies on transport EOF.

Ops served in mock mode: handshake, encode_image (hash-cache only),
eval_structure_field, eval_latent_field. The remaining protocol ops
(estimate_depth, detect_landmarks, decode_object) answer Unsupported until a
real model backend is wired in.
"""

from __future__ import annotations

import hashlib
import logging
import sys
import traceback

import numpy as np

from .oracle import OracleStore
from .protocol import (
    EnvelopeError,
    decode_tensor,
    error_response,
    parse_request,
    response,
)

log = logging.getLogger(__name__)


class MockService:
    """Oracle-field service: the deployment used for CI and equivalence runs."""

    def __init__(self, store: OracleStore, resolution: int = 64):
        self.store = store
        self.resolution = int(resolution)
        self._conditions: dict[str, str] = {}

    # --- op handlers ---

    def op_handshake(self, tensors, params):
        ops = ",".join(sorted(name[3:] for name in dir(self)
                              if name.startswith("op_")))
        return {}, {"sigma_min": self.store.sigma_min,
                    "channels": self.store.target.channels,
                    "resolution": self.resolution,
                    "ops": ops}

    def op_encode_image(self, tensors, params):
        if "image" not in tensors:
            raise EnvelopeError("encode_image needs an 'image' tensor")
        digest = hashlib.sha256(
            np.ascontiguousarray(tensors["image"], "<f4").tobytes()).hexdigest()
        self._conditions[digest] = digest  # mock: the hash is the condition
        return {}, {"condition_id": digest}

    @staticmethod
    def _region(params):
        origin = (int(params["origin_x"]), int(params["origin_y"]),
                  int(params["origin_z"]))
        shape = (int(params["shape_x"]), int(params["shape_y"]),
                 int(params["shape_z"]))
        return origin, shape

    def op_eval_structure_field(self, tensors, params):
        if "x" not in tensors:
            raise EnvelopeError("eval_structure_field needs an 'x' tensor")
        x = tensors["x"]
        origin, shape = self._region(params)
        target = self.store.window_cells(origin, shape)
        if x.size != target.size:
            raise EnvelopeError(
                f"x has {x.size} elements, region {shape} wants {target.size}")
        v = self.store.velocity(x.reshape(-1), float(params["t"]), target)
        return {"v": v.reshape(x.shape)}, {}

    def op_eval_latent_field(self, tensors, params):
        if "x" not in tensors or "positions" not in tensors:
            raise EnvelopeError("eval_latent_field needs 'x' and 'positions'")
        x = tensors["x"]
        origin, _ = self._region(params)
        positions = tensors["positions"].astype(np.int64) + np.asarray(origin)
        target = self.store.lookup_rows(positions)
        if target.shape != x.shape:
            raise EnvelopeError(
                f"x shape {x.shape} does not match {len(positions)} positions")
        v = self.store.velocity(x, float(params["t"]), target)
        return {"v": v}, {}

    def handle_line(self, line: bytes | str) -> str:
        try:
            req = parse_request(line)
        except EnvelopeError as exc:
            return error_response("", "?", "ProtocolError", str(exc))
        op = req["op"]
        rid = req["request_id"]
        handler = getattr(self, f"op_{op}", None)
        if handler is None:
            return error_response(rid, op, "Unsupported",
                                  f"op {op!r} not available in this deployment")
        try:
            tensors = {t["name"]: decode_tensor(t) for t in req["tensors"]}
            out_tensors, out_params = handler(tensors, req["params"])
            for name, arr in out_tensors.items():
                if not np.isfinite(arr).all():
                    raise EnvelopeError(f"non-finite values in tensor {name!r}")
            return response(rid, op, out_tensors, out_params)
        except Exception as exc:  # noqa: BLE001 - all failures go on the wire
            log.debug("handler for %s failed:\n%s", op, traceback.format_exc())
            return error_response(rid, op, type(exc).__name__, str(exc))


def serve_stdio(service: MockService, stdin=None, stdout=None) -> None:
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer
    for line in stdin:
        if not line.strip():
            continue
        reply = service.handle_line(line)
        stdout.write(reply.encode("utf-8") + b"\n")
        stdout.flush()


def serve_tcp(service: MockService, host: str, port: int) -> None:
    import socket

    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as srv:
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind((host, port))
        srv.listen(1)
        log.info("listening on %s:%d", host, port)
        while True:
            conn, peer = srv.accept()
            log.info("connection from %s", peer)
            with conn, conn.makefile("rb") as reader:
                for line in reader:
                    if not line.strip():
                        continue
                    conn.sendall(service.handle_line(line).encode("utf-8") + b"\n")
