"""Local IPC for the agent: length-prefixed frames of the canonical encoding.

The platform's caller-identification hook is abstracted away here: each
request carries the caller's application identity explicitly, authenticated
by possession of the local socket (filesystem permissions on the socket
path are the local credential).
"""

from __future__ import annotations

import json
import logging
import os
import socket
import socketserver
import struct
import threading

from . import protocol
from .agent import (
    AgentError,
    AppAclDeniedError,
    NotFoundError,
    NotLoggedInError,
    PeerShareAgent,
    ValidationFailed,
)
from .model import AppIdentity

logger = logging.getLogger(__name__)

_HEADER = struct.Struct(">I")
MAX_FRAME = 16 * 1024 * 1024

_ERROR_CODES = {
    NotLoggedInError: "no_authenticated_user",
    NotFoundError: protocol.NOT_FOUND,
    AppAclDeniedError: protocol.ACL_DENIED,
    ValidationFailed: protocol.VALIDATION_ERROR,
}


def write_frame(sock: socket.socket, payload: dict) -> None:
    raw = protocol.canonical_json(payload)
    sock.sendall(_HEADER.pack(len(raw)) + raw)


def read_frame(sock: socket.socket) -> dict | None:
    header = _read_exact(sock, _HEADER.size)
    if header is None:
        return None
    (length,) = _HEADER.unpack(header)
    if length > MAX_FRAME:
        raise ValueError(f"frame of {length} bytes exceeds limit")
    raw = _read_exact(sock, length)
    if raw is None:
        return None
    return json.loads(raw)


def _read_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = b""
    while len(chunks) < n:
        part = sock.recv(n - len(chunks))
        if not part:
            return None
        chunks += part
    return chunks


def _handle_request(agent: PeerShareAgent, request: dict) -> dict:
    api = request.get("api", "")
    caller_obj = request.get("caller") or {}
    caller = AppIdentity(str(caller_obj.get("platform", "")), str(caller_obj.get("app_id", "")))
    args = request.get("args") or {}
    try:
        if api == "add_data":
            data = protocol.appdata_from_wire(args["data"])
            return {"status": "ok", "local_id": agent.add_data(caller, data)}
        if api == "update_data":
            data = protocol.appdata_from_wire(args["data"])
            agent.update_data(caller, int(args["local_id"]), data)
            return {"status": "ok"}
        if api == "remove_data":
            agent.remove_data(caller, int(args["local_id"]))
            return {"status": "ok"}
        if api == "get_shared_data_detail":
            items = agent.get_shared_data_detail(caller, args.get("data_type"))
            return {
                "status": "ok",
                "items": [
                    {
                        "origin": item.origin,
                        "is_owner": item.is_owner,
                        "local_id": item.local_id,
                        "object_id": item.object_id,
                        "sync": item.sync,
                        "data": protocol.appdata_to_wire(item.data),
                    }
                    for item in items
                ],
            }
        if api == "get_my_social_data":
            identity, peershare_id = agent.get_my_social_data(caller)
            return {
                "status": "ok",
                "identity": protocol.identity_to_wire(identity),
                "peershare_id": peershare_id,
            }
        if api == "get_acl_policies":
            acl = agent.get_acl_policies(caller)
            return {
                "status": "ok",
                "stale": acl.stale,
                "policies": [
                    {
                        "sharing_policy": protocol.policy_to_wire(option.policy),
                        "display_name": option.display_name,
                    }
                    for option in acl.options
                ],
            }
        if api == "refresh":
            summary = agent.refresh()
            return {
                "status": "ok",
                "uploaded": summary.uploaded,
                "updated": summary.updated,
                "deleted": summary.deleted,
                "fetched": summary.fetched,
                "purged": summary.purged,
                "errors": summary.errors,
            }
        return {"status": "error", "code": "bad_request", "message": f"unknown api {api!r}"}
    except AgentError as exc:
        code = _ERROR_CODES.get(type(exc), "agent_error")
        return {"status": "error", "code": code, "message": str(exc)}
    except protocol.DecodeError as exc:
        return {"status": "error", "code": protocol.VALIDATION_ERROR, "message": str(exc)}


class AgentIpcServer:
    """Serve the agent API on a unix socket, one thread per connection."""

    def __init__(self, agent: PeerShareAgent, socket_path: str):
        self.agent = agent
        self.socket_path = socket_path
        if os.path.exists(socket_path):
            os.remove(socket_path)

        handler_agent = agent

        class _Handler(socketserver.BaseRequestHandler):
            def handle(self) -> None:
                while True:
                    try:
                        request = read_frame(self.request)
                    except (ValueError, json.JSONDecodeError, OSError):
                        break
                    if request is None:
                        break
                    write_frame(self.request, _handle_request(handler_agent, request))

        class _Server(socketserver.ThreadingUnixStreamServer):
            daemon_threads = True

        self._server = _Server(socket_path, _Handler)
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)
        if os.path.exists(self.socket_path):
            os.remove(self.socket_path)


class AgentIpcClient:
    """Blocking client for the agent socket; one request at a time."""

    def __init__(self, socket_path: str, timeout: float = 30.0):
        self._sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        self._sock.settimeout(timeout)
        self._sock.connect(socket_path)
        self._lock = threading.Lock()

    def call(self, api: str, caller: AppIdentity, **args) -> dict:
        request = {
            "api": api,
            "caller": {"platform": caller.platform, "app_id": caller.app_id},
            "args": args,
        }
        with self._lock:
            write_frame(self._sock, request)
            response = read_frame(self._sock)
        if response is None:
            raise ConnectionError("agent closed the connection")
        return response

    def close(self) -> None:
        self._sock.close()
