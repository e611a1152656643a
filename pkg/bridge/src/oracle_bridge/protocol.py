"""Wire protocol: one compact-JSON line per message.

Request:  {"id":<n>,"h":H,"w":W,"c":C,"pixels":"<base64 raw row-major bytes>"}
Reply:    {"id":<n>,"probs":[...]}        probabilities sum to 1 within 1e-6
Error:    {"id":<n>,"error":"<message>"}  id echoes the offending request

The HTTP transport carries the same payloads as POST body and response body.
"""

from __future__ import annotations

import base64
import binascii
import json

import numpy as np

PROB_SUM_TOLERANCE = 1e-6


class ProtocolError(ValueError):
    """Request line could not be decoded; carries the request id if known."""

    def __init__(self, message: str, req_id: int | None = None):
        super().__init__(message)
        self.req_id = req_id


def decode_request(line: str) -> tuple[int, np.ndarray]:
    """Parse a request line into (id, HxWxC uint8 pixel array)."""
    req_id = None
    try:
        msg = json.loads(line)
    except ValueError as exc:
        raise ProtocolError(f"unparseable request: {exc}") from exc
    if not isinstance(msg, dict):
        raise ProtocolError("request is not a JSON object")
    try:
        req_id = int(msg["id"])
        h, w, c = int(msg["h"]), int(msg["w"]), int(msg["c"])
        raw = base64.b64decode(msg["pixels"], validate=True)
    except (KeyError, TypeError, ValueError, binascii.Error) as exc:
        raise ProtocolError(f"malformed request: {exc}", req_id) from exc
    if h < 1 or w < 1 or c not in (1, 3):
        raise ProtocolError(f"unsupported image shape {h}x{w}x{c}", req_id)
    if len(raw) != h * w * c:
        raise ProtocolError(
            f"{len(raw)} pixel bytes for declared shape {h}x{w}x{c}", req_id
        )
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, c)
    return req_id, pixels


def encode_reply(req_id: int, probs: np.ndarray) -> str:
    """Serialize a probability reply, normalizing exactly before sending."""
    probs = np.asarray(probs, dtype=np.float64).ravel()
    if probs.size == 0 or np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise ValueError("model produced an invalid probability vector")
    total = float(probs.sum())
    if total <= 0:
        raise ValueError("model produced an all-zero probability vector")
    probs = probs / total
    assert abs(float(probs.sum()) - 1.0) <= PROB_SUM_TOLERANCE
    return json.dumps(
        {"id": req_id, "probs": [float(p) for p in probs]}, separators=(",", ":")
    )


def encode_error(req_id: int | None, message: str) -> str:
    return json.dumps(
        {"id": -1 if req_id is None else req_id, "error": message},
        separators=(",", ":"),
    )
