"""HTTP(S) front end for the server core.

One POST path per protocol method; application-level errors travel as
status fields in 200 bodies so error semantics live in exactly one place.
The optional ``ui_dir`` is served read-only under /ui for the web console.
"""

from __future__ import annotations

import fcntl
import json
import logging
import mimetypes
import os
import ssl
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import protocol
from .server import PeerShareServer

logger = logging.getLogger(__name__)

METHOD_PATHS = {
    "/register": "register",
    "/upload": "upload",
    "/update": "update",
    "/download": "download",
    "/delete": "delete",
    "/unregister": "unregister",
    "/policy": "policy",
}


class StoreLockedError(RuntimeError):
    """Another server instance already owns this store."""


def acquire_store_lock(store_path: str):
    """Exclusive advisory lock next to the store; refused if already held."""
    lock_path = store_path + ".lock"
    handle = open(lock_path, "w")
    try:
        fcntl.flock(handle, fcntl.LOCK_EX | fcntl.LOCK_NB)
    except OSError:
        handle.close()
        raise StoreLockedError(f"store {store_path} is locked by another instance") from None
    handle.write(str(os.getpid()))
    handle.flush()
    return handle


class _Handler(BaseHTTPRequestHandler):
    server_version = "peershare"
    protocol_version = "HTTP/1.1"

    def log_message(self, format, *args):  # keep request logs on our logger
        logger.debug("%s - %s", self.address_string(), format % args)

    @property
    def core(self) -> PeerShareServer:
        return self.server.core  # type: ignore[attr-defined]

    def _send_json(self, payload: dict, status: int = 200) -> None:
        raw = protocol.encode_response(payload)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def do_POST(self) -> None:
        method_name = METHOD_PATHS.get(self.path)
        if method_name is None:
            self._send_json(protocol.error_response(protocol.NOT_FOUND, "unknown path"), 404)
            return
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            env = protocol.decode_envelope(raw)
        except protocol.DecodeError as exc:
            self._send_json(protocol.error_response(protocol.VALIDATION_ERROR, str(exc)), 400)
            return
        if env.method.value != method_name:
            self._send_json(
                protocol.error_response(
                    protocol.VALIDATION_ERROR,
                    f"envelope method {env.method.value} does not match path {self.path}",
                ),
                400,
            )
            return
        self._send_json(self.core.dispatch(env))

    def do_GET(self) -> None:
        ui_dir = getattr(self.server, "ui_dir", None)
        if ui_dir and (self.path == "/ui" or self.path.startswith("/ui/")):
            self._serve_ui(ui_dir)
            return
        self._send_json(protocol.error_response(protocol.NOT_FOUND, "unknown path"), 404)

    def _serve_ui(self, ui_dir: str) -> None:
        rel = self.path[len("/ui"):].lstrip("/") or "index.html"
        target = os.path.realpath(os.path.join(ui_dir, rel))
        if not target.startswith(os.path.realpath(ui_dir) + os.sep) and target != os.path.realpath(
            os.path.join(ui_dir, "index.html")
        ):
            self._send_json(protocol.error_response(protocol.NOT_FOUND, "unknown path"), 404)
            return
        if not os.path.isfile(target):
            self._send_json(protocol.error_response(protocol.NOT_FOUND, "no such file"), 404)
            return
        ctype = mimetypes.guess_type(target)[0] or "application/octet-stream"
        with open(target, "rb") as fh:
            body = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class ServerApp:
    """Owns the listening socket, the TLS wrap, the store lock and the
    change-event poller thread."""

    def __init__(
        self,
        core: PeerShareServer,
        host: str = "127.0.0.1",
        port: int = 0,
        certfile: str | None = None,
        keyfile: str | None = None,
        poll_interval: float = 60.0,
        ui_dir: str | None = None,
        store_path: str | None = None,
    ):
        self.core = core
        self._lock_handle = acquire_store_lock(store_path) if store_path else None
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._httpd.core = core  # type: ignore[attr-defined]
        self._httpd.ui_dir = ui_dir  # type: ignore[attr-defined]
        self.tls = bool(certfile)
        if certfile:
            if not os.path.exists(certfile) or (keyfile and not os.path.exists(keyfile)):
                self._httpd.server_close()
                raise FileNotFoundError(f"certificate or key not found: {certfile}")
            context = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
            context.load_cert_chain(certfile, keyfile)
            self._httpd.socket = context.wrap_socket(self._httpd.socket, server_side=True)
        self.host, self.port = self._httpd.server_address[:2]
        self._poll_interval = poll_interval
        self._stop = threading.Event()
        self._wake = threading.Event()
        self._threads: list[threading.Thread] = []
        # Realtime path: an in-process provider pushes a wakeup and the
        # poller drains immediately; remote providers fall back to the
        # polling cadence alone.
        for binding in getattr(core, "_bindings", {}).values():
            subscribe = getattr(binding.provider, "subscribe", None)
            if subscribe is not None:
                subscribe(lambda _event: self._wake.set())

    def start(self) -> None:
        serve = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        poller = threading.Thread(target=self._poll_loop, daemon=True)
        serve.start()
        poller.start()
        self._threads = [serve, poller]

    def _poll_loop(self) -> None:
        backoff = 1.0
        while not self._stop.is_set():
            self._wake.wait(timeout=min(self._poll_interval, backoff))
            self._wake.clear()
            if self._stop.is_set():
                return
            try:
                self.core.pump_changes()
                backoff = self._poll_interval
            except Exception as exc:
                logger.warning("change poll failed (%s); backing off", exc)
                backoff = min(backoff * 2, self._poll_interval)

    def stop(self) -> None:
        self._stop.set()
        self._wake.set()
        self._httpd.shutdown()
        self._httpd.server_close()
        for thread in self._threads:
            thread.join(timeout=5)
        if self._lock_handle:
            self._lock_handle.close()

    def serve_forever(self) -> None:
        self.start()
        try:
            self._stop.wait()
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()


def write_inspect(core: PeerShareServer) -> str:
    return json.dumps(core.dump_state(), indent=2, sort_keys=True)
