"""How the agent reaches the server: in-process or over the pinned channel."""

from __future__ import annotations

import http.client
import threading
import urllib.parse

from . import protocol
from .channel import ChannelConfigError, PinnedHTTPSConnection
from .protocol import Envelope


class TransportError(Exception):
    """The request could not be delivered or answered."""


class InProcessTransport:
    """Direct dispatch into a server core living in the same process."""

    def __init__(self, server):
        self._server = server

    def send(self, env: Envelope) -> dict:
        return self._server.dispatch(env)


class HttpTransport:
    """One POST per request over a persistent connection.

    https URLs require a pin and refuse to start without one; plain http is
    accepted only when explicitly allowed (development and UI harnesses).
    """

    def __init__(
        self,
        base_url: str,
        pin_path: str | None = None,
        timeout: float = 30.0,
        allow_plaintext: bool = False,
    ):
        parsed = urllib.parse.urlparse(base_url)
        self._host = parsed.hostname or "127.0.0.1"
        self._scheme = parsed.scheme
        self._port = parsed.port or (443 if parsed.scheme == "https" else 80)
        self._timeout = timeout
        self._pin_path = pin_path
        self._lock = threading.Lock()
        self._conn: http.client.HTTPConnection | None = None
        if self._scheme == "https":
            if not pin_path:
                raise ChannelConfigError("https transport requires a pinned certificate")
        elif self._scheme == "http":
            if not allow_plaintext:
                raise ChannelConfigError("plaintext http disabled; pass allow_plaintext for dev use")
        else:
            raise ChannelConfigError(f"unsupported scheme {self._scheme!r}")

    def _connection(self) -> http.client.HTTPConnection:
        if self._conn is None:
            if self._scheme == "https":
                self._conn = PinnedHTTPSConnection(
                    self._host, self._port, self._pin_path, timeout=self._timeout
                )
            else:
                self._conn = http.client.HTTPConnection(
                    self._host, self._port, timeout=self._timeout
                )
        return self._conn

    def send(self, env: Envelope) -> dict:
        raw = protocol.encode_envelope(env)
        path = "/" + env.method.value
        with self._lock:
            for attempt in (0, 1):  # one reconnect on a stale persistent connection
                conn = self._connection()
                try:
                    conn.request(
                        "POST", path, body=raw, headers={"Content-Type": "application/json"}
                    )
                    rsp = conn.getresponse()
                    body = rsp.read()
                    return protocol.decode_response(body)
                except (http.client.HTTPException, ConnectionError, OSError) as exc:
                    self.close_locked()
                    if attempt == 1:
                        raise TransportError(str(exc)) from None
        raise TransportError("unreachable")

    def close_locked(self) -> None:
        if self._conn is not None:
            try:
                self._conn.close()
            finally:
                self._conn = None

    def close(self) -> None:
        with self._lock:
            self.close_locked()
