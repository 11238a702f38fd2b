"""Threaded HTTP server over the application dispatcher.

One process, one data directory, plain HTTP/1.1. TLS and anything fancier
belong in a reverse proxy in front.
"""

from __future__ import annotations

import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .app import Application
from .http import Request

log = logging.getLogger("sciblog.server")


def _make_handler(app: Application, max_request_bytes: int):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"
        server_version = "sciblog"

        def log_message(self, fmt, *args):  # quiet by default, logging-managed
            log.debug("%s %s", self.address_string(), fmt % args)

        def _respond(self, body_allowed: bool = True):
            length = int(self.headers.get("Content-Length") or 0)
            if length > max_request_bytes:
                self.send_response(413)
                self.send_header("Content-Length", "0")
                self.send_header("Connection", "close")
                self.end_headers()
                return
            body = self.rfile.read(length) if length else b""
            request = Request.make(
                self.command,
                self.path,
                headers=dict(self.headers.items()),
                body=body,
                remote_addr=self.client_address[0],
            )
            response = app.dispatch(request)
            self.send_response(response.status)
            self.send_header("Content-Type", response.content_type)
            self.send_header("Content-Length", str(len(response.body)))
            for name, value in response.headers:
                self.send_header(name, value)
            self.end_headers()
            if body_allowed and response.body:
                self.wfile.write(response.body)

        def do_GET(self):
            self._respond()

        def do_POST(self):
            self._respond()

    return Handler


class SciBlogServer:
    def __init__(self, app: Application, host: str = "127.0.0.1", port: int = 0):
        max_request = app.site.config.asset_max_bytes + 1024 * 1024
        self._httpd = ThreadingHTTPServer(
            (host, port), _make_handler(app, max_request)
        )
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._httpd.server_address[:2]

    @property
    def base_url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def serve_forever(self) -> None:
        log.info("serving on %s", self.base_url)
        self._httpd.serve_forever()

    def start_background(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
