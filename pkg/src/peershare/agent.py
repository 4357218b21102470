"""The device-side service: local store, app-facing API, sync queue.

Applications talk to this, never to the server directly.  Every item
records the identity of the application that created it, and only that
application may modify or delete it.  Owner-asserted items queue for
upload; user-asserted ones never leave the device.  All state changes are
committed before the API call returns, so a killed and restarted agent
resumes exactly where it stopped, and every pending operation carries an
idempotency key so retries cannot duplicate anything on the server.
"""

from __future__ import annotations

import json
import logging
import os
import secrets
import sqlite3
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from . import protocol
from .model import AppData, AppIdentity, BindingType, SharingPolicy, SocialIdentity, is_live
from .protocol import (
    NOT_FOUND,
    NOT_FOUND_REMOVE,
    OK,
    Envelope,
    Method,
)
from .provider import ProviderError, ProviderUnreachableError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_REFRESH_INTERVAL = 21600  # seconds; six hours

_SCHEMA = """
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS items (
    local_id INTEGER PRIMARY KEY AUTOINCREMENT,
    object_id INTEGER NOT NULL DEFAULT 0,
    data TEXT NOT NULL,
    creator_platform TEXT NOT NULL,
    creator_app_id TEXT NOT NULL,
    sync TEXT NOT NULL,
    op_key TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS remote (
    object_key INTEGER PRIMARY KEY AUTOINCREMENT,
    view TEXT NOT NULL,
    fetched_at REAL NOT NULL
);
"""


class SyncState(Enum):
    PENDING_UPLOAD = "pending_upload"
    SYNCED = "synced"
    PENDING_UPDATE = "pending_update"
    PENDING_DELETE = "pending_delete"
    LOCAL_ONLY = "local_only"


class AgentError(Exception):
    pass


class NotLoggedInError(AgentError):
    pass


class NotFoundError(AgentError):
    pass


class AppAclDeniedError(AgentError):
    """Caller is not the application that created the item."""


class ValidationFailed(AgentError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class ServerRejectedError(AgentError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class SharedItem:
    """One row of the shared-data view: a local item or a downloaded one."""

    origin: str  # "local" | "remote"
    data: AppData
    is_owner: bool
    local_id: int | None = None
    object_id: int | None = None
    sync: str | None = None


@dataclass
class PolicyOption:
    policy: SharingPolicy
    display_name: str


@dataclass
class AclPolicies:
    options: list[PolicyOption]
    stale: bool = False


@dataclass
class RefreshSummary:
    uploaded: int = 0
    updated: int = 0
    deleted: int = 0
    fetched: int = 0
    purged: int = 0
    errors: list[str] = field(default_factory=list)


def _new_op_key() -> str:
    return secrets.token_hex(16)


class PeerShareAgent:
    """One agent per device; one store file per logged-in user."""

    def __init__(
        self,
        data_dir: str | os.PathLike,
        provider,
        transport,
        app_id: str = "peershare-app",
        refresh_interval: float = DEFAULT_REFRESH_INTERVAL,
        clock: Callable[[], float] = time.time,
    ):
        self.data_dir = str(data_dir)
        self.provider = provider
        self.transport = transport
        self.app_id = app_id
        self.refresh_interval = refresh_interval
        self._clock = clock
        self._lock = threading.RLock()
        self._refreshing = False
        self._db: sqlite3.Connection | None = None
        self._identity: SocialIdentity | None = None
        os.makedirs(self.data_dir, exist_ok=True)

    # -- session ------------------------------------------------------------

    def _session_path(self) -> str:
        return os.path.join(self.data_dir, "session.json")

    def _store_path(self, identity: SocialIdentity) -> str:
        safe = f"{identity.network}__{identity.social_id}".replace(os.sep, "_")
        return os.path.join(self.data_dir, f"agent-{safe}.sqlite")

    def _open_store(self, identity: SocialIdentity) -> None:
        if self._db is not None:
            self._db.close()
        self._db = sqlite3.connect(self._store_path(identity), check_same_thread=False)
        self._db.executescript(_SCHEMA)
        if self._meta_get("schema_version") is None:
            self._meta_set("schema_version", str(SCHEMA_VERSION))
        self._db.commit()
        self._identity = identity

    def login(self, social_id: str, social_name: str = "", token_ttl: float = 30 * 86400) -> str:
        """Authenticate via the social provider and register with the server.

        Returns the peershare id.  Login is idempotent: an already-known
        identity keeps its id and data.
        """
        with self._lock:
            token = self.provider.issue_token(social_id, self.app_id, token_ttl)
            identity = SocialIdentity(self.provider.network, social_id, social_name or social_id)
            self._open_store(identity)
            response = self.transport.send(
                Envelope(
                    method=Method.REGISTER,
                    token=token.token,
                    body={"identity": protocol.identity_to_wire(identity)},
                )
            )
            if response.get("status") != OK:
                raise ServerRejectedError(response.get("code", "error"), response.get("message", ""))
            self._meta_set("network", identity.network)
            self._meta_set("social_id", identity.social_id)
            self._meta_set("social_name", identity.social_name)
            self._meta_set("token", token.token)
            self._meta_set("peershare_id", response["peershare_id"])
            self._db.commit()
            with open(self._session_path(), "w", encoding="utf-8") as fh:
                json.dump({"network": identity.network, "social_id": identity.social_id,
                           "social_name": identity.social_name}, fh)
            return response["peershare_id"]

    def restore(self) -> bool:
        """Reattach to the previous login after a restart."""
        with self._lock:
            try:
                with open(self._session_path(), encoding="utf-8") as fh:
                    session = json.load(fh)
            except FileNotFoundError:
                return False
            identity = SocialIdentity(
                session["network"], session["social_id"], session.get("social_name", "")
            )
            self._open_store(identity)
            return self._meta_get("peershare_id") is not None

    def logout(self) -> None:
        with self._lock:
            if self._db is not None:
                self._db.close()
                self._db = None
            self._identity = None
            try:
                os.remove(self._session_path())
            except FileNotFoundError:
                pass

    def _require_login(self) -> SocialIdentity:
        if self._identity is None or self._db is None:
            raise NotLoggedInError("no authenticated user")
        return self._identity

    def _meta_get(self, key: str) -> str | None:
        row = self._db.execute("SELECT value FROM meta WHERE key=?", (key,)).fetchone()
        return row[0] if row else None

    def _meta_set(self, key: str, value: str) -> None:
        self._db.execute(
            "INSERT INTO meta (key, value) VALUES (?, ?) "
            "ON CONFLICT(key) DO UPDATE SET value=excluded.value",
            (key, value),
        )

    @property
    def peershare_id(self) -> str:
        self._require_login()
        return self._meta_get("peershare_id") or ""

    @property
    def token(self) -> str:
        self._require_login()
        return self._meta_get("token") or ""

    # -- application API ------------------------------------------------------

    def _prepare(self, caller: AppIdentity, data: AppData) -> AppData:
        identity = self._require_login()
        owner = data.owner or identity
        prepared = AppData(
            data_type=data.data_type,
            data_value=data.data_value,
            descriptor=data.descriptor,
            policy=data.policy,
            created_at=data.created_at or int(self._clock()),
            expires_at=data.expires_at,
            owner=owner,
            creator=caller,
            device_id=data.device_id,
        )
        violations = list(protocol.validate_app_data(prepared))
        if owner.key() != identity.key():
            violations.append("owner does not match logged-in user")
        if violations:
            raise ValidationFailed(violations)
        return prepared

    def add_data(self, caller: AppIdentity, data: AppData) -> int:
        """Store a new item and return its local handle.

        Owner-asserted items are queued and uploaded at the next refresh
        or connectivity; user-asserted ones stay on the device forever.
        """
        with self._lock:
            prepared = self._prepare(caller, data)
            if prepared.descriptor.binding_type is BindingType.USER_ASSERTED:
                sync, op_key = SyncState.LOCAL_ONLY, ""
            else:
                sync, op_key = SyncState.PENDING_UPLOAD, _new_op_key()
            cursor = self._db.execute(
                "INSERT INTO items (object_id, data, creator_platform, creator_app_id, sync, op_key) "
                "VALUES (0, ?, ?, ?, ?, ?)",
                (
                    json.dumps(protocol.appdata_to_wire(prepared), sort_keys=True),
                    caller.platform,
                    caller.app_id,
                    sync.value,
                    op_key,
                ),
            )
            self._db.commit()
            return cursor.lastrowid

    def _load_local(self, local_id: int) -> tuple[int, AppData, AppIdentity, SyncState, str]:
        row = self._db.execute(
            "SELECT object_id, data, creator_platform, creator_app_id, sync, op_key "
            "FROM items WHERE local_id=?",
            (local_id,),
        ).fetchone()
        if row is None:
            raise NotFoundError(f"no item with handle {local_id}")
        object_id, data_json, platform, app_id, sync, op_key = row
        return (
            object_id,
            protocol.appdata_from_wire(json.loads(data_json)),
            AppIdentity(platform, app_id),
            SyncState(sync),
            op_key,
        )

    def _check_acl(self, caller: AppIdentity, creator: AppIdentity) -> None:
        if caller != creator:
            raise AppAclDeniedError(
                f"item belongs to {creator.canonical()}, not {caller.canonical()}"
            )

    def update_data(self, caller: AppIdentity, local_id: int, data: AppData) -> None:
        with self._lock:
            object_id, current, creator, sync, _op_key = self._load_local(local_id)
            if sync is SyncState.PENDING_DELETE:
                raise NotFoundError(f"item {local_id} is being deleted")
            self._check_acl(caller, creator)
            prepared = self._prepare(caller, data)
            if prepared.descriptor.binding_type is not current.descriptor.binding_type:
                raise ValidationFailed(["binding type cannot change on update"])
            if sync is SyncState.LOCAL_ONLY:
                new_sync, op_key = SyncState.LOCAL_ONLY, ""
            elif sync is SyncState.PENDING_UPLOAD:
                new_sync, op_key = SyncState.PENDING_UPLOAD, _new_op_key()
            else:
                new_sync, op_key = SyncState.PENDING_UPDATE, _new_op_key()
            self._db.execute(
                "UPDATE items SET data=?, sync=?, op_key=? WHERE local_id=?",
                (
                    json.dumps(protocol.appdata_to_wire(prepared), sort_keys=True),
                    new_sync.value,
                    op_key,
                    local_id,
                ),
            )
            self._db.commit()

    def remove_data(self, caller: AppIdentity, local_id: int) -> None:
        with self._lock:
            object_id, _current, creator, sync, _op_key = self._load_local(local_id)
            self._check_acl(caller, creator)
            if sync in (SyncState.LOCAL_ONLY, SyncState.PENDING_UPLOAD) or object_id == 0:
                # Never reached the server; a purely local deletion.
                self._db.execute("DELETE FROM items WHERE local_id=?", (local_id,))
            else:
                self._db.execute(
                    "UPDATE items SET sync=?, op_key=? WHERE local_id=?",
                    (SyncState.PENDING_DELETE.value, _new_op_key(), local_id),
                )
            self._db.commit()

    def get_shared_data_detail(self, caller: AppIdentity, data_type: str | None = None) -> list[SharedItem]:
        """Live remote items plus the caller's own local items."""
        with self._lock:
            self._require_login()
            now = self._clock()
            results: list[SharedItem] = []
            local_object_ids = set()
            for local_id, object_id, data_json, platform, app_id, sync in self._db.execute(
                "SELECT local_id, object_id, data, creator_platform, creator_app_id, sync "
                "FROM items ORDER BY local_id"
            ):
                if sync == SyncState.PENDING_DELETE.value:
                    local_object_ids.add(object_id)
                    continue
                if AppIdentity(platform, app_id) != caller:
                    local_object_ids.add(object_id)
                    continue
                data = protocol.appdata_from_wire(json.loads(data_json))
                local_object_ids.add(object_id)
                if data_type is not None and data.data_type != data_type:
                    continue
                if not is_live(data, now):
                    continue
                results.append(
                    SharedItem(
                        origin="local",
                        data=data,
                        is_owner=True,
                        local_id=local_id,
                        object_id=object_id or None,
                        sync=sync,
                    )
                )
            for (view_json,) in self._db.execute("SELECT view FROM remote ORDER BY object_key"):
                view = protocol.itemview_from_wire(json.loads(view_json))
                if view.is_owner:
                    # Own items: the local record is authoritative, and the
                    # owner view (it carries the object id) is only for the
                    # app that created the item.
                    if view.object_id in local_object_ids:
                        continue
                    if view.data.creator is not None and view.data.creator != caller:
                        continue
                if data_type is not None and view.data.data_type != data_type:
                    continue
                if not is_live(view.data, now):
                    continue
                results.append(
                    SharedItem(
                        origin="remote",
                        data=view.data,
                        is_owner=view.is_owner,
                        object_id=view.object_id,
                    )
                )
            return results

    def get_my_social_data(self, caller: AppIdentity) -> tuple[SocialIdentity, str]:
        with self._lock:
            identity = self._require_login()
            return identity, self.peershare_id

    def get_acl_policies(self, caller: AppIdentity) -> AclPolicies:
        """All-friends plus one option per custom list, cached across
        provider outages."""
        with self._lock:
            identity = self._require_login()
            options = [PolicyOption(SharingPolicy.all_friends(), "all friends")]
            try:
                refs = self.provider.get_custom_lists(identity.social_id)
            except (ProviderUnreachableError, ProviderError):
                cached = self._meta_get("acl_cache")
                if cached:
                    for entry in json.loads(cached):
                        options.append(
                            PolicyOption(
                                SharingPolicy.named_list(entry["list_id"]), entry["display_name"]
                            )
                        )
                return AclPolicies(options=options, stale=True)
            cache = []
            for ref in refs:
                options.append(PolicyOption(SharingPolicy.named_list(ref.list_id), ref.display_name))
                cache.append({"list_id": ref.list_id, "display_name": ref.display_name})
            self._meta_set("acl_cache", json.dumps(cache))
            self._db.commit()
            return AclPolicies(options=options, stale=False)

    # -- synchronization ---------------------------------------------------------

    def _send(self, method: Method, body: dict) -> dict:
        return self.transport.send(
            Envelope(method=method, token=self.token, peershare_id=self.peershare_id, body=body)
        )

    def _flush_uploads(self, summary: RefreshSummary) -> None:
        rows = self._db.execute(
            "SELECT local_id, data, op_key FROM items WHERE sync=? ORDER BY local_id",
            (SyncState.PENDING_UPLOAD.value,),
        ).fetchall()
        for local_id, data_json, op_key in rows:
            response = self._send(
                Method.UPLOAD,
                {"items": [json.loads(data_json)], "idempotency_key": op_key},
            )
            if response.get("status") != OK:
                summary.errors.append(f"upload {local_id}: {response.get('code')}")
                continue
            object_id = response["object_ids"][0]
            for replaced in response.get("replaced", []):
                self._db.execute(
                    "DELETE FROM items WHERE object_id=? AND local_id<>?", (replaced, local_id)
                )
            self._db.execute(
                "UPDATE items SET object_id=?, sync=?, op_key='' WHERE local_id=?",
                (object_id, SyncState.SYNCED.value, local_id),
            )
            self._db.commit()
            summary.uploaded += 1

    def _flush_updates(self, summary: RefreshSummary) -> None:
        rows = self._db.execute(
            "SELECT local_id, object_id, data, op_key FROM items WHERE sync=? ORDER BY local_id",
            (SyncState.PENDING_UPDATE.value,),
        ).fetchall()
        for local_id, object_id, data_json, op_key in rows:
            response = self._send(
                Method.UPDATE,
                {
                    "updates": [{"object_id": object_id, "data": json.loads(data_json)}],
                    "idempotency_key": op_key,
                },
            )
            if response.get("status") != OK:
                summary.errors.append(f"update {local_id}: {response.get('code')}")
                continue
            result = response["results"][0]
            if result["code"] == OK:
                self._db.execute(
                    "UPDATE items SET sync=?, op_key='' WHERE local_id=?",
                    (SyncState.SYNCED.value, local_id),
                )
                summary.updated += 1
            elif result["code"] == NOT_FOUND_REMOVE:
                # Deleted server-side; drop our copy too.
                self._db.execute("DELETE FROM items WHERE local_id=?", (local_id,))
                summary.updated += 1
            else:
                summary.errors.append(f"update {local_id}: {result['code']}")
            self._db.commit()

    def _flush_deletes(self, summary: RefreshSummary) -> None:
        rows = self._db.execute(
            "SELECT local_id, object_id, op_key FROM items WHERE sync=? ORDER BY local_id",
            (SyncState.PENDING_DELETE.value,),
        ).fetchall()
        for local_id, object_id, op_key in rows:
            response = self._send(
                Method.DELETE, {"object_ids": [object_id], "idempotency_key": op_key}
            )
            ok = response.get("status") == OK
            if not ok:
                codes = {entry.get("code") for entry in response.get("detail", [])}
                ok = response.get("code") == protocol.PARTIAL_FAILURE and codes <= {NOT_FOUND}
            if ok:
                self._db.execute("DELETE FROM items WHERE local_id=?", (local_id,))
                summary.deleted += 1
            else:
                summary.errors.append(f"delete {local_id}: {response.get('code')}")
            self._db.commit()

    def flush(self, summary: RefreshSummary | None = None) -> RefreshSummary:
        """Push pending operations in causal order: uploads, updates, deletes."""
        with self._lock:
            self._require_login()
            summary = summary or RefreshSummary()
            self._flush_uploads(summary)
            self._flush_updates(summary)
            self._flush_deletes(summary)
            return summary

    def refresh(self, now: float | None = None) -> RefreshSummary:
        """Flush the queue, then replace the remote set from a download."""
        with self._lock:
            self._require_login()
            if self._refreshing:
                return RefreshSummary(errors=["refresh already running"])
            self._refreshing = True
            try:
                now = self._clock() if now is None else now
                summary = self.flush()
                response = self._send(Method.DOWNLOAD, {})
                if response.get("status") != OK:
                    summary.errors.append(f"download: {response.get('code')}")
                    return summary
                self._db.execute("DELETE FROM remote")
                for view in response["items"]:
                    self._db.execute(
                        "INSERT INTO remote (view, fetched_at) VALUES (?, ?)",
                        (json.dumps(view, sort_keys=True), now),
                    )
                summary.fetched = len(response["items"])
                # Local hygiene: drop expired local items.
                for local_id, data_json in self._db.execute(
                    "SELECT local_id, data FROM items"
                ).fetchall():
                    data = protocol.appdata_from_wire(json.loads(data_json))
                    if not is_live(data, now):
                        self._db.execute("DELETE FROM items WHERE local_id=?", (local_id,))
                        summary.purged += 1
                self._meta_set("last_refresh_at", str(now))
                self._db.commit()
                return summary
            finally:
                self._refreshing = False

    def maybe_refresh(self, now: float | None = None) -> RefreshSummary | None:
        """Run a refresh if the interval elapsed (or none ever ran).

        A missed fire while the agent was stopped shows up here as an
        overdue interval, so the next start refreshes immediately.
        """
        with self._lock:
            self._require_login()
            now = self._clock() if now is None else now
            last = self._meta_get("last_refresh_at")
            if last is not None and now - float(last) < self.refresh_interval:
                return None
            return self.refresh(now)

    def override_policy(self, object_id: int, policy: SharingPolicy) -> None:
        """User-level sharing-policy override of an uploaded item.

        This is the user steering the server directly (the web console does
        the same); it is not part of the application-facing API and is not
        subject to the app ACL.
        """
        with self._lock:
            self._require_login()
            response = self._send(
                Method.POLICY,
                {"object_id": object_id, "sharing_policy": protocol.policy_to_wire(policy)},
            )
            if response.get("status") != OK:
                raise ServerRejectedError(response.get("code", "error"), response.get("message", ""))

    def unregister(self) -> None:
        """Remove the account and all server-side data, then log out."""
        with self._lock:
            self._require_login()
            response = self._send(Method.UNREGISTER, {})
            if response.get("status") != OK:
                raise ServerRejectedError(response.get("code", "error"), response.get("message", ""))
            store = self._store_path(self._identity)
            self.logout()
            try:
                os.remove(store)
            except FileNotFoundError:
                pass
