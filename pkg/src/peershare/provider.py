"""Pluggable social-network abstraction and the scriptable mock provider.

The mock stands in for a real social network: it issues bearer tokens on
behalf of users (the SSO analog), owns the friendship graph and custom
friend lists, and emits an ordered change feed whenever a mutation could
alter a policy expansion.  It runs in-process for unit tests and behind
plain HTTP for integration tests (see :mod:`peershare.provider_http`); both
modes satisfy the same contracts.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import time
from dataclasses import dataclass
from typing import Callable

from .model import PolicyKind, SharingPolicy


class ProviderError(Exception):
    """Base for provider failures."""


class UnknownUserError(ProviderError):
    pass


class UnknownListError(ProviderError):
    pass


class ListNotOwnedError(ProviderError):
    pass


class DuplicateUserError(ProviderError):
    pass


class DuplicateListError(ProviderError):
    pass


class ProviderUnreachableError(ProviderError):
    """Transport failure talking to a remote provider."""


@dataclass(frozen=True)
class ProviderToken:
    token: str
    user_social_id: str
    app_id: str
    issued_at: int
    expires_at: int  # 0 = no expiry
    valid: bool


@dataclass(frozen=True)
class FriendListRef:
    list_id: str
    display_name: str
    owner_social_id: str


@dataclass(frozen=True)
class ListChangeEvent:
    """One graph mutation that may affect a policy expansion.

    ``list_id`` is None for friendship changes (the all-friends marker) and
    the affected list id for list changes.  ``change_seq`` strictly
    increases per provider instance.
    """

    owner_social_id: str
    list_id: str | None
    change_seq: int

    def to_wire(self) -> dict:
        return {
            "owner_social_id": self.owner_social_id,
            "list_id": self.list_id,
            "change_seq": self.change_seq,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "ListChangeEvent":
        return cls(
            owner_social_id=obj["owner_social_id"],
            list_id=obj.get("list_id"),
            change_seq=int(obj["change_seq"]),
        )


class MockProvider:
    """In-memory social network with optional JSON-file persistence.

    Mutations are serialized on an internal lock; reads may come from any
    thread.  Every effective mutation that can change an expansion result
    appends exactly one event to the change feed (friendship edits carry
    the all-friends marker) and notifies subscribers exactly once each.
    """

    def __init__(
        self,
        network: str = "mocknet",
        state_path: str | os.PathLike | None = None,
        clock: Callable[[], float] = time.time,
    ):
        self.network = network
        self._clock = clock
        self._state_path = str(state_path) if state_path else None
        self._lock = threading.RLock()
        self._users: dict[str, str] = {}  # social_id -> display name
        self._friends: dict[str, set[str]] = {}
        self._lists: dict[str, dict] = {}  # list_id -> {owner, display_name, members}
        self._tokens: dict[str, dict] = {}
        self._events: list[ListChangeEvent] = []
        self._seq = 0
        self._subscribers: list[Callable[[ListChangeEvent], None]] = []
        if self._state_path and os.path.exists(self._state_path):
            self._load()

    # -- persistence ------------------------------------------------------

    def _load(self) -> None:
        with open(self._state_path, encoding="utf-8") as fh:
            state = json.load(fh)
        self.network = state["network"]
        self._users = dict(state["users"])
        self._friends = {u: set(v) for u, v in state["friends"].items()}
        self._lists = {
            lid: {"owner": l["owner"], "display_name": l["display_name"], "members": set(l["members"])}
            for lid, l in state["lists"].items()
        }
        self._tokens = dict(state["tokens"])
        self._events = [ListChangeEvent.from_wire(e) for e in state["events"]]
        self._seq = state["seq"]

    def _save(self) -> None:
        if not self._state_path:
            return
        state = {
            "network": self.network,
            "users": self._users,
            "friends": {u: sorted(v) for u, v in self._friends.items()},
            "lists": {
                lid: {
                    "owner": l["owner"],
                    "display_name": l["display_name"],
                    "members": sorted(l["members"]),
                }
                for lid, l in self._lists.items()
            },
            "tokens": self._tokens,
            "events": [e.to_wire() for e in self._events],
            "seq": self._seq,
        }
        tmp = self._state_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(state, fh)
        os.replace(tmp, self._state_path)

    # -- authentication ---------------------------------------------------

    def issue_token(self, user_social_id: str, app_id: str, ttl: float | None = 86400) -> ProviderToken:
        """Mint a fresh bearer token for an authenticated user.

        The provider happily issues tokens for any application id; it is
        the relying server's job to reject tokens issued to other apps.
        """
        with self._lock:
            if user_social_id not in self._users:
                raise UnknownUserError(user_social_id)
            now = int(self._clock())
            token = secrets.token_urlsafe(32)
            expires_at = 0 if ttl is None else now + int(ttl)
            self._tokens[token] = {
                "user_social_id": user_social_id,
                "app_id": app_id,
                "issued_at": now,
                "expires_at": expires_at,
                "revoked": False,
            }
            self._save()
            return ProviderToken(token, user_social_id, app_id, now, expires_at, True)

    def verify_token(self, token: str) -> tuple[str, str, bool]:
        """Return (user_social_id, app_id, valid).  Total: garbage is just invalid."""
        with self._lock:
            record = self._tokens.get(token)
            if record is None:
                return ("", "", False)
            expired = record["expires_at"] != 0 and self._clock() >= record["expires_at"]
            valid = not record["revoked"] and not expired
            return (record["user_social_id"], record["app_id"], valid)

    def revoke_token(self, token: str) -> None:
        with self._lock:
            if token in self._tokens:
                self._tokens[token]["revoked"] = True
                self._save()

    # -- graph reads ------------------------------------------------------

    def _require_user(self, social_id: str) -> None:
        if social_id not in self._users:
            raise UnknownUserError(social_id)

    def get_friends(self, user_social_id: str) -> set[str]:
        with self._lock:
            self._require_user(user_social_id)
            return set(self._friends.get(user_social_id, set()))

    def get_custom_lists(self, user_social_id: str) -> list[FriendListRef]:
        with self._lock:
            self._require_user(user_social_id)
            return [
                FriendListRef(lid, l["display_name"], l["owner"])
                for lid, l in sorted(self._lists.items())
                if l["owner"] == user_social_id
            ]

    def get_list_members(self, list_id: str) -> set[str]:
        with self._lock:
            if list_id not in self._lists:
                raise UnknownListError(list_id)
            return set(self._lists[list_id]["members"])

    def expand_policy(self, owner_social_id: str, policy: SharingPolicy) -> set[str]:
        """Resolve a sharing policy to the social ids it currently covers.

        List membership is taken as-is (a list may contain ex-friends); the
        owner is never part of the result.
        """
        with self._lock:
            self._require_user(owner_social_id)
            if policy.kind is PolicyKind.ALL_FRIENDS:
                audience = set(self._friends.get(owner_social_id, set()))
            else:
                entry = self._lists.get(policy.list_ref)
                if entry is None:
                    raise UnknownListError(policy.list_ref)
                if entry["owner"] != owner_social_id:
                    raise ListNotOwnedError(policy.list_ref)
                audience = set(entry["members"])
            audience.discard(owner_social_id)
            return audience

    # -- change feed ------------------------------------------------------

    def poll_changes(self, after_seq: int) -> list[ListChangeEvent]:
        with self._lock:
            return [e for e in self._events if e.change_seq > after_seq]

    def subscribe(self, callback: Callable[[ListChangeEvent], None]) -> None:
        with self._lock:
            self._subscribers.append(callback)

    def _emit(self, owner_social_id: str, list_id: str | None) -> None:
        self._seq += 1
        event = ListChangeEvent(owner_social_id, list_id, self._seq)
        self._events.append(event)
        for callback in list(self._subscribers):
            callback(event)

    # -- graph mutations --------------------------------------------------

    def add_user(self, social_id: str, display_name: str = "") -> None:
        with self._lock:
            if social_id in self._users:
                raise DuplicateUserError(social_id)
            self._users[social_id] = display_name or social_id
            self._friends[social_id] = set()
            self._save()

    def add_friendship(self, a: str, b: str) -> None:
        """Symmetric; adding an existing edge is a no-op with no event."""
        with self._lock:
            self._require_user(a)
            self._require_user(b)
            if a == b or b in self._friends[a]:
                return
            self._friends[a].add(b)
            self._friends[b].add(a)
            self._emit(a, None)
            self._save()

    def remove_friendship(self, a: str, b: str) -> None:
        with self._lock:
            self._require_user(a)
            self._require_user(b)
            if b not in self._friends[a]:
                return
            self._friends[a].discard(b)
            self._friends[b].discard(a)
            self._emit(a, None)
            self._save()

    def create_list(self, owner_social_id: str, display_name: str, list_id: str | None = None) -> str:
        with self._lock:
            self._require_user(owner_social_id)
            lid = list_id or f"l{self._seq + 1}-{len(self._lists) + 1}"
            if lid in self._lists:
                raise DuplicateListError(lid)
            self._lists[lid] = {
                "owner": owner_social_id,
                "display_name": display_name,
                "members": set(),
            }
            self._emit(owner_social_id, lid)
            self._save()
            return lid

    def delete_list(self, list_id: str) -> None:
        with self._lock:
            entry = self._lists.pop(list_id, None)
            if entry is None:
                raise UnknownListError(list_id)
            self._emit(entry["owner"], list_id)
            self._save()

    def add_to_list(self, list_id: str, social_id: str) -> None:
        with self._lock:
            entry = self._lists.get(list_id)
            if entry is None:
                raise UnknownListError(list_id)
            self._require_user(social_id)
            if social_id in entry["members"]:
                return
            entry["members"].add(social_id)
            self._emit(entry["owner"], list_id)
            self._save()

    def remove_from_list(self, list_id: str, social_id: str) -> None:
        with self._lock:
            entry = self._lists.get(list_id)
            if entry is None:
                raise UnknownListError(list_id)
            if social_id not in entry["members"]:
                return
            entry["members"].discard(social_id)
            self._emit(entry["owner"], list_id)
            self._save()

    def mutate_graph(self, command: dict) -> dict:
        """Dispatch one mutation command (the test-harness control surface)."""
        op = command.get("op")
        if op == "add_user":
            self.add_user(command["social_id"], command.get("display_name", ""))
        elif op == "add_friendship":
            self.add_friendship(command["a"], command["b"])
        elif op == "remove_friendship":
            self.remove_friendship(command["a"], command["b"])
        elif op == "create_list":
            lid = self.create_list(
                command["owner"], command.get("display_name", ""), command.get("list_id")
            )
            return {"status": "ok", "list_id": lid}
        elif op == "delete_list":
            self.delete_list(command["list_id"])
        elif op == "add_to_list":
            self.add_to_list(command["list_id"], command["social_id"])
        elif op == "remove_from_list":
            self.remove_from_list(command["list_id"], command["social_id"])
        else:
            raise ProviderError(f"unknown graph command {op!r}")
        return {"status": "ok"}

    # -- test/inspection surface -----------------------------------------

    def raw_state(self) -> dict:
        """Snapshot of the raw graph tables, for brute-force oracles."""
        with self._lock:
            return {
                "users": dict(self._users),
                "friends": {u: set(v) for u, v in self._friends.items()},
                "lists": {
                    lid: {
                        "owner": l["owner"],
                        "display_name": l["display_name"],
                        "members": set(l["members"]),
                    }
                    for lid, l in self._lists.items()
                },
                "seq": self._seq,
            }
