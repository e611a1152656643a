"""Black-box classifier oracles and the query wire protocol.

An oracle is anything with ``classify(image) -> OracleResponse`` plus a
``concurrency_safe`` flag. Three families ship here: in-process toy models
(linear-softmax and conv-GAP), a subprocess speaking a line protocol over
its standard streams, and an HTTP endpoint.

Wire format (one line per message, compact JSON):

    request: {"id":<n>,"h":H,"w":W,"c":C,"pixels":"<base64 raw row-major bytes>"}
    reply:   {"id":<n>,"probs":[...]}

An error reply carries {"id":<n>,"error":"<message>"} instead of probs.
The HTTP transport POSTs the same request payload to a single endpoint and
receives the same reply payload as the response body.
"""

from __future__ import annotations

import base64
import json
import shlex
import subprocess
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .attention import ProxyModel, seed_proxy
from .images import Image

PROB_SUM_TOLERANCE = 1e-3  # beyond this a remote reply is rejected, not renormalized
HTTP_CLASSIFY_PATH = "/classify"


class OracleError(Exception):
    """Base class for oracle failures."""


class OracleTransportError(OracleError):
    """The oracle process or endpoint could not be reached or died."""


class OracleProtocolError(OracleError):
    """The remote reply was malformed or violated the protocol."""


class OracleShapeError(OracleError):
    """Submitted image does not match the oracle's declared input shape."""


@dataclass(frozen=True, eq=False)
class OracleResponse:
    """Validated class-probability vector with query latency."""

    probabilities: np.ndarray
    predicted_class: int
    latency: float = 0.0

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=np.float64).ravel()
        if probs.size == 0:
            raise ValueError("empty probability vector")
        if np.any(probs < 0):
            raise ValueError("negative class probability")
        total = float(probs.sum())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        if probs[self.predicted_class] != probs.max():
            raise ValueError("predicted class is not the argmax")
        probs = probs.copy()
        probs.setflags(write=False)
        object.__setattr__(self, "probabilities", probs)

    @classmethod
    def from_probs(cls, probs: np.ndarray, latency: float = 0.0) -> "OracleResponse":
        probs = np.asarray(probs, dtype=np.float64).ravel()
        return cls(probs, int(np.argmax(probs)), latency)

    @property
    def num_classes(self) -> int:
        return int(self.probabilities.size)

    def confidence(self, cls_id: int) -> float:
        return float(self.probabilities[cls_id])


class Oracle(Protocol):
    concurrency_safe: bool

    def classify(self, image: Image) -> OracleResponse: ...


def softmax(scores: np.ndarray) -> np.ndarray:
    z = np.asarray(scores, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _check_shape(declared: tuple[int, int, int] | None, image: Image) -> None:
    if declared is not None and image.shape != declared:
        raise OracleShapeError(f"oracle expects input {declared}, got {image.shape}")


class LinearSoftmaxOracle:
    """softmax(W @ flat(image)/255 + b); deterministic in (weights, image)."""

    concurrency_safe = True

    def __init__(self, weights: np.ndarray, bias: np.ndarray, input_shape: tuple[int, int, int]):
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        h, w, c = input_shape
        if weights.shape != (bias.size, h * w * c):
            raise ValueError(
                f"weights {weights.shape} inconsistent with input {input_shape} "
                f"and {bias.size} classes"
            )
        self.weights = weights
        self.bias = bias
        self.input_shape = (h, w, c)

    @classmethod
    def from_seed(
        cls, seed: int, input_shape: tuple[int, int, int], num_classes: int = 10
    ) -> "LinearSoftmaxOracle":
        h, w, c = input_shape
        rng = np.random.default_rng(seed)
        weights = rng.normal(0.0, 1.0, size=(num_classes, h * w * c))
        bias = rng.normal(0.0, 0.1, size=num_classes)
        return cls(weights, bias, input_shape)

    def classify(self, image: Image) -> OracleResponse:
        _check_shape(self.input_shape, image)
        start = time.perf_counter()
        flat = image.pixels.reshape(-1).astype(np.float64) / 255.0
        probs = softmax(self.weights @ flat + self.bias)
        return OracleResponse.from_probs(probs, time.perf_counter() - start)


class ConvGapOracle:
    """softmax over a conv-GAP network's class scores.

    The same network doubles as the attention module's white-box proxy,
    which makes fully self-contained proxy/target experiments possible.
    """

    concurrency_safe = True

    def __init__(self, model: ProxyModel, input_shape: tuple[int, int, int]):
        if input_shape[2] != model.input_channels:
            raise ValueError("model channels do not match declared input shape")
        self.model = model
        self.input_shape = input_shape

    @classmethod
    def from_seed(
        cls,
        seed: int,
        input_shape: tuple[int, int, int],
        num_classes: int = 10,
        num_filters: int = 8,
        kernel: int = 3,
        stride: int = 2,
    ) -> "ConvGapOracle":
        model = seed_proxy(
            seed,
            channels=input_shape[2],
            num_filters=num_filters,
            kernel=kernel,
            stride=stride,
            num_classes=num_classes,
        )
        return cls(model, input_shape)

    def classify(self, image: Image) -> OracleResponse:
        _check_shape(self.input_shape, image)
        start = time.perf_counter()
        probs = softmax(self.model.scores(image))
        return OracleResponse.from_probs(probs, time.perf_counter() - start)


# --------------------------------------------------------------------------
# Wire protocol

def wire_encode_request(req_id: int, image: Image) -> str:
    payload = base64.b64encode(image.pixels.tobytes()).decode("ascii")
    return json.dumps(
        {
            "id": req_id,
            "h": image.height,
            "w": image.width,
            "c": image.channels,
            "pixels": payload,
        },
        separators=(",", ":"),
    )


def wire_decode_request(line: str) -> tuple[int, Image]:
    try:
        msg = json.loads(line)
        req_id = int(msg["id"])
        h, w, c = int(msg["h"]), int(msg["w"]), int(msg["c"])
        raw = base64.b64decode(msg["pixels"], validate=True)
    except (ValueError, KeyError, TypeError) as exc:
        raise OracleProtocolError(f"malformed request line: {exc}") from exc
    if len(raw) != h * w * c:
        raise OracleProtocolError(
            f"request {req_id}: {len(raw)} pixel bytes for declared {h}x{w}x{c}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, c)
    return req_id, Image(pixels)


def wire_encode_response(req_id: int, probs: np.ndarray) -> str:
    values = [float(p) for p in np.asarray(probs).ravel()]
    return json.dumps({"id": req_id, "probs": values}, separators=(",", ":"))


def wire_decode_response(line: str, expect_id: int) -> np.ndarray:
    """Parse and validate a reply; small probability drift is renormalized,
    anything beyond PROB_SUM_TOLERANCE is rejected."""
    try:
        msg = json.loads(line)
    except ValueError as exc:
        raise OracleProtocolError(f"unparseable reply: {exc}") from exc
    if not isinstance(msg, dict) or "id" not in msg:
        raise OracleProtocolError(f"reply without id: {line[:200]!r}")
    got_id = msg["id"]
    if "error" in msg:
        raise OracleProtocolError(f"oracle error for request {got_id}: {msg['error']}")
    if got_id != expect_id:
        raise OracleProtocolError(f"reply id {got_id} does not match request id {expect_id}")
    try:
        probs = np.asarray([float(p) for p in msg["probs"]], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise OracleProtocolError(f"reply {got_id}: bad probability vector: {exc}") from exc
    if probs.size == 0 or np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise OracleProtocolError(f"reply {got_id}: probabilities must be finite and >= 0")
    total = float(probs.sum())
    if abs(total - 1.0) > PROB_SUM_TOLERANCE:
        raise OracleProtocolError(f"reply {got_id}: probabilities sum to {total!r}")
    return probs / total


class SubprocessOracle:
    """Line-protocol oracle over a child process's stdin/stdout.

    Strictly serial: one in-flight request at a time.
    """

    concurrency_safe = False

    def __init__(self, command: str | list[str], input_shape: tuple[int, int, int] | None = None):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise OracleTransportError(f"cannot start oracle process {argv!r}: {exc}") from exc
        self._next_id = 1
        self._lock = threading.Lock()
        self.input_shape = input_shape

    def classify(self, image: Image) -> OracleResponse:
        _check_shape(self.input_shape, image)
        with self._lock:
            req_id = self._next_id
            self._next_id += 1
            start = time.perf_counter()
            try:
                self._proc.stdin.write(wire_encode_request(req_id, image) + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
            except (OSError, ValueError) as exc:
                raise OracleTransportError(f"oracle process I/O failed: {exc}") from exc
            if not line:
                raise OracleTransportError(
                    f"oracle process closed its stream (exit code {self._proc.poll()})"
                )
            probs = wire_decode_response(line, req_id)
            return OracleResponse.from_probs(probs, time.perf_counter() - start)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self) -> "SubprocessOracle":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


class HttpOracle:
    """POSTs the request payload to a classify endpoint.

    ``max_in_flight`` > 1 declares the endpoint safe for parallel queries.
    """

    def __init__(
        self,
        url: str,
        input_shape: tuple[int, int, int] | None = None,
        timeout: float = 30.0,
        max_in_flight: int = 1,
    ):
        self.url = url.rstrip("/")
        if not self.url.endswith(HTTP_CLASSIFY_PATH):
            self.url += HTTP_CLASSIFY_PATH
        self.timeout = timeout
        self.input_shape = input_shape
        self.concurrency_safe = max_in_flight > 1
        self._next_id = 1
        self._id_lock = threading.Lock()

    def classify(self, image: Image) -> OracleResponse:
        _check_shape(self.input_shape, image)
        with self._id_lock:
            req_id = self._next_id
            self._next_id += 1
        body = wire_encode_request(req_id, image).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}
        )
        start = time.perf_counter()
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                if resp.status != 200:
                    raise OracleTransportError(f"oracle endpoint returned HTTP {resp.status}")
                reply = resp.read().decode("utf-8")
        except urllib.error.HTTPError as exc:
            raise OracleTransportError(f"oracle endpoint returned HTTP {exc.code}") from exc
        except (urllib.error.URLError, OSError) as exc:
            raise OracleTransportError(f"cannot reach oracle at {self.url}: {exc}") from exc
        probs = wire_decode_response(reply.strip(), req_id)
        return OracleResponse.from_probs(probs, time.perf_counter() - start)


class CountingOracle:
    """Wrapper that counts queries and asserts the box constraint.

    Every submitted image must already be a valid 8-bit image; the count
    equals the number of classify calls exactly, also under concurrency.
    """

    def __init__(self, inner: Oracle):
        self.inner = inner
        self.concurrency_safe = getattr(inner, "concurrency_safe", False)
        self._count = 0
        self._lock = threading.Lock()

    @property
    def query_count(self) -> int:
        return self._count

    def classify(self, image: Image) -> OracleResponse:
        if image.pixels.dtype != np.uint8:
            raise ValueError("oracle query with non-8-bit image")
        with self._lock:
            self._count += 1
        return self.inner.classify(image)


def make_oracle(
    spec: str,
    input_shape: tuple[int, int, int],
    seed: int = 0,
    num_classes: int = 10,
):
    """Build an oracle from a spec string.

    Forms: ``toy:linear``, ``toy:convgap``, ``subprocess:<command>``, and
    ``http:<url>`` (a bare http(s):// URL also works).
    """
    if spec.startswith(("http://", "https://")):
        return HttpOracle(spec, input_shape=input_shape)
    kind, sep, rest = spec.partition(":")
    if kind == "toy":
        if rest == "linear":
            return LinearSoftmaxOracle.from_seed(seed, input_shape, num_classes)
        if rest == "convgap":
            return ConvGapOracle.from_seed(seed, input_shape, num_classes)
        raise ValueError(f"unknown toy oracle variant {rest!r}")
    if kind == "subprocess" and sep:
        return SubprocessOracle(rest, input_shape=input_shape)
    if kind == "http" and sep:
        return HttpOracle(rest, input_shape=input_shape)
    raise ValueError(f"unrecognized oracle spec {spec!r}")
