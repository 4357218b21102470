"""Standalone HTTP mode for the social provider, plus the matching client.

The endpoints mirror the in-process operations one-to-one; integration
tests run the same contract suite against both modes.  The mock provider
is a test fixture, so it listens on plain loopback HTTP.
"""

from __future__ import annotations

import json
import logging
import threading
import urllib.error
import urllib.parse
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import protocol
from .model import SharingPolicy
from .provider import (
    FriendListRef,
    ListChangeEvent,
    ListNotOwnedError,
    MockProvider,
    ProviderError,
    ProviderUnreachableError,
    UnknownListError,
    UnknownUserError,
)

logger = logging.getLogger(__name__)

_ERROR_KINDS = {
    "unknown_user": UnknownUserError,
    "unknown_list": UnknownListError,
    "list_not_owned": ListNotOwnedError,
    "provider_error": ProviderError,
}


def _error_kind(exc: ProviderError) -> str:
    for kind, cls in _ERROR_KINDS.items():
        if type(exc) is cls:
            return kind
    return "provider_error"


class _ProviderHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, format, *args):
        logger.debug("%s - %s", self.address_string(), format % args)

    @property
    def provider(self) -> MockProvider:
        return self.server.provider  # type: ignore[attr-defined]

    def _send(self, payload: dict, status: int = 200) -> None:
        raw = protocol.canonical_json(payload)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(raw)))
        self.end_headers()
        self.wfile.write(raw)

    def _send_error(self, exc: ProviderError) -> None:
        self._send({"status": "error", "kind": _error_kind(exc), "message": str(exc)}, 400)

    def _query(self) -> dict[str, str]:
        parsed = urllib.parse.urlparse(self.path)
        return {k: v[0] for k, v in urllib.parse.parse_qs(parsed.query).items()}

    def do_POST(self) -> None:
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
        except ValueError:
            self._send({"status": "error", "kind": "bad_request", "message": "bad json"}, 400)
            return
        path = urllib.parse.urlparse(self.path).path
        try:
            if path == "/token":
                token = self.provider.issue_token(
                    body["user_social_id"], body["app_id"], body.get("ttl", 86400)
                )
                self._send(
                    {
                        "status": "ok",
                        "token": token.token,
                        "user_social_id": token.user_social_id,
                        "app_id": token.app_id,
                        "issued_at": token.issued_at,
                        "expires_at": token.expires_at,
                    }
                )
            elif path == "/revoke":
                self.provider.revoke_token(body["token"])
                self._send({"status": "ok"})
            elif path == "/graph":
                self._send(self.provider.mutate_graph(body))
            else:
                self._send({"status": "error", "kind": "bad_request", "message": "unknown path"}, 404)
        except ProviderError as exc:
            self._send_error(exc)
        except KeyError as exc:
            self._send({"status": "error", "kind": "bad_request", "message": f"missing {exc}"}, 400)

    def do_GET(self) -> None:
        path = urllib.parse.urlparse(self.path).path
        query = self._query()
        try:
            if path == "/debug_token":
                user, app_id, valid = self.provider.verify_token(query.get("token", ""))
                self._send(
                    {"status": "ok", "user_social_id": user, "app_id": app_id, "valid": valid}
                )
            elif path == "/friends":
                friends = self.provider.get_friends(query["user"])
                self._send({"status": "ok", "friends": sorted(friends)})
            elif path == "/lists":
                refs = self.provider.get_custom_lists(query["user"])
                self._send(
                    {
                        "status": "ok",
                        "lists": [
                            {
                                "list_id": r.list_id,
                                "display_name": r.display_name,
                                "owner_social_id": r.owner_social_id,
                            }
                            for r in refs
                        ],
                    }
                )
            elif path == "/list_members":
                members = self.provider.get_list_members(query["list"])
                self._send({"status": "ok", "members": sorted(members)})
            elif path == "/changes":
                events = self.provider.poll_changes(int(query.get("after", 0)))
                self._send({"status": "ok", "events": [e.to_wire() for e in events]})
            else:
                self._send({"status": "error", "kind": "bad_request", "message": "unknown path"}, 404)
        except ProviderError as exc:
            self._send_error(exc)
        except KeyError as exc:
            self._send({"status": "error", "kind": "bad_request", "message": f"missing {exc}"}, 400)


class ProviderApp:
    """Run a mock provider behind loopback HTTP."""

    def __init__(self, provider: MockProvider, host: str = "127.0.0.1", port: int = 0):
        self.provider = provider
        self._httpd = ThreadingHTTPServer((host, port), _ProviderHandler)
        self._httpd.provider = provider  # type: ignore[attr-defined]
        self.host, self.port = self._httpd.server_address[:2]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)

    def serve_forever(self) -> None:
        try:
            self._httpd.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            self._httpd.server_close()


class HttpProviderClient:
    """Provider operations over HTTP; raises the same error types as the
    in-process provider so the server cannot tell the difference."""

    def __init__(self, base_url: str, network: str = "mocknet", timeout: float = 10.0):
        self.network = network
        self._base = base_url.rstrip("/")
        self._timeout = timeout

    def _request(self, path: str, body: dict | None = None) -> dict:
        url = self._base + path
        try:
            if body is None:
                with urllib.request.urlopen(url, timeout=self._timeout) as rsp:
                    payload = json.loads(rsp.read())
            else:
                req = urllib.request.Request(
                    url,
                    data=protocol.canonical_json(body),
                    headers={"Content-Type": "application/json"},
                )
                with urllib.request.urlopen(req, timeout=self._timeout) as rsp:
                    payload = json.loads(rsp.read())
        except urllib.error.HTTPError as exc:
            try:
                payload = json.loads(exc.read())
            except ValueError:
                raise ProviderUnreachableError(str(exc)) from None
        except (urllib.error.URLError, OSError, TimeoutError) as exc:
            raise ProviderUnreachableError(str(exc)) from None
        if payload.get("status") == "error":
            kind = payload.get("kind", "provider_error")
            raise _ERROR_KINDS.get(kind, ProviderError)(payload.get("message", ""))
        return payload

    def issue_token(self, user_social_id: str, app_id: str, ttl: float | None = 86400):
        payload = self._request(
            "/token", {"user_social_id": user_social_id, "app_id": app_id, "ttl": ttl}
        )
        from .provider import ProviderToken

        return ProviderToken(
            token=payload["token"],
            user_social_id=payload["user_social_id"],
            app_id=payload["app_id"],
            issued_at=payload["issued_at"],
            expires_at=payload["expires_at"],
            valid=True,
        )

    def revoke_token(self, token: str) -> None:
        self._request("/revoke", {"token": token})

    def verify_token(self, token: str) -> tuple[str, str, bool]:
        payload = self._request("/debug_token?" + urllib.parse.urlencode({"token": token}))
        return (payload["user_social_id"], payload["app_id"], payload["valid"])

    def get_friends(self, user_social_id: str) -> set[str]:
        payload = self._request("/friends?" + urllib.parse.urlencode({"user": user_social_id}))
        return set(payload["friends"])

    def get_custom_lists(self, user_social_id: str) -> list[FriendListRef]:
        payload = self._request("/lists?" + urllib.parse.urlencode({"user": user_social_id}))
        return [
            FriendListRef(l["list_id"], l["display_name"], l["owner_social_id"])
            for l in payload["lists"]
        ]

    def get_list_members(self, list_id: str) -> set[str]:
        payload = self._request("/list_members?" + urllib.parse.urlencode({"list": list_id}))
        return set(payload["members"])

    def expand_policy(self, owner_social_id: str, policy: SharingPolicy) -> set[str]:
        from .model import PolicyKind

        if policy.kind is PolicyKind.ALL_FRIENDS:
            return self.get_friends(owner_social_id)
        refs = self.get_custom_lists(owner_social_id)
        if policy.list_ref not in {r.list_id for r in refs}:
            # Distinguish missing list from foreign list the same way the
            # in-process provider does.
            try:
                self.get_list_members(policy.list_ref)
            except UnknownListError:
                raise
            raise ListNotOwnedError(policy.list_ref)
        members = self.get_list_members(policy.list_ref)
        members.discard(owner_social_id)
        return members

    def poll_changes(self, after_seq: int) -> list[ListChangeEvent]:
        payload = self._request("/changes?" + urllib.parse.urlencode({"after": after_seq}))
        return [ListChangeEvent.from_wire(e) for e in payload["events"]]

    def mutate_graph(self, command: dict) -> dict:
        return self._request("/graph", command)
