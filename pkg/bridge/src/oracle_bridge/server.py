"""Bridge server: stdio line mode and HTTP mode.

stdio mode is strictly serial and never reorders replies; each request line
gets exactly one reply line. A malformed request or a model failure produces
an error reply carrying the offending id, and the process keeps serving.

HTTP mode exposes POST /classify with the same payloads; concurrent requests
are allowed up to a configurable worker count.
"""

from __future__ import annotations

import argparse
import sys
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .models import Preprocess, load_model
from .protocol import ProtocolError, decode_request, encode_error, encode_reply


@dataclass(frozen=True)
class BridgeConfig:
    model: str = "uniform:10"
    transport: str = "stdio"  # or "http"
    port: int = 8551
    http_workers: int = 4
    preprocess: Preprocess = field(default_factory=Preprocess)
    class_list: str | None = None

    def __post_init__(self):
        if self.transport not in ("stdio", "http"):
            raise ValueError(f"transport must be stdio or http, got {self.transport!r}")
        if self.http_workers < 1:
            raise ValueError("http worker count must be >= 1")


class Bridge:
    def __init__(self, config: BridgeConfig):
        self.config = config
        self.model = load_model(config.model, config.preprocess)
        self.class_names: list[str] | None = None
        if config.class_list:
            names = Path(config.class_list).read_text().splitlines()
            self.class_names = [n for n in names if n]
            if len(self.class_names) != self.model.num_classes:
                raise ValueError(
                    f"class list has {len(self.class_names)} entries, model "
                    f"has {self.model.num_classes} classes"
                )

    def handle_line(self, line: str) -> str:
        """One reply per request; errors carry the offending id."""
        try:
            req_id, pixels = decode_request(line)
        except ProtocolError as exc:
            return encode_error(exc.req_id, str(exc))
        try:
            probs = self.model.predict(pixels)
            return encode_reply(req_id, probs)
        except Exception as exc:  # model failure must not kill the server
            return encode_error(req_id, f"model failure: {exc}")

    def serve_stdio(self, stdin=None, stdout=None) -> None:
        stdin = stdin if stdin is not None else sys.stdin
        stdout = stdout if stdout is not None else sys.stdout
        print("oracle-bridge ready (stdio)", file=sys.stderr, flush=True)
        for line in stdin:
            line = line.strip()
            if not line:
                continue
            stdout.write(self.handle_line(line) + "\n")
            stdout.flush()

    def serve_http(self) -> None:
        bridge = self
        gate = threading.BoundedSemaphore(self.config.http_workers)

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                if self.path.rstrip("/") != "/classify":
                    self.send_error(404, "unknown endpoint")
                    return
                length = int(self.headers.get("Content-Length", "0"))
                body = self.rfile.read(length).decode("utf-8")
                with gate:
                    reply = bridge.handle_line(body.strip())
                payload = reply.encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        server = ThreadingHTTPServer(("127.0.0.1", self.config.port), Handler)
        print(
            f"oracle-bridge ready (http, port {server.server_address[1]})",
            file=sys.stderr,
            flush=True,
        )
        server.serve_forever()


def parse_args(argv=None) -> BridgeConfig:
    parser = argparse.ArgumentParser(
        prog="oracle-bridge",
        description="Serve an image classifier behind the oracle wire protocol.",
    )
    parser.add_argument("--model", default="uniform:10",
                        help="echo:<p1,p2,...> | uniform:<k> | torchvision:<name>")
    parser.add_argument("--transport", choices=["stdio", "http"], default="stdio")
    parser.add_argument("--port", type=int, default=8551)
    parser.add_argument("--http-workers", type=int, default=4, dest="http_workers")
    parser.add_argument("--resize", type=int, default=224)
    parser.add_argument("--resize-policy", choices=["stretch", "center-crop"],
                        default="stretch", dest="resize_policy")
    parser.add_argument("--mean", default="0.485,0.456,0.406")
    parser.add_argument("--std", default="0.229,0.224,0.225")
    parser.add_argument("--class-list", dest="class_list")
    args = parser.parse_args(argv)
    preprocess = Preprocess(
        resize=args.resize,
        resize_policy=args.resize_policy,
        mean=tuple(float(v) for v in args.mean.split(",")),
        std=tuple(float(v) for v in args.std.split(",")),
    )
    return BridgeConfig(
        model=args.model,
        transport=args.transport,
        port=args.port,
        http_workers=args.http_workers,
        preprocess=preprocess,
        class_list=args.class_list,
    )


def serve(config: BridgeConfig) -> None:
    bridge = Bridge(config)
    if config.transport == "stdio":
        bridge.serve_stdio()
    else:
        bridge.serve_http()


def entry() -> None:
    serve(parse_args())


if __name__ == "__main__":
    entry()
