"""The trusted server: token-verified requests, item storage, eligibility.

Every mutating request is authenticated against the social provider (token
validity, application id, user id) before anything is touched.  Download
eligibility is materialized per item as the set of social ids the sharing
policy expands to; social ids of users who have not registered yet stay
pending and are resolved the moment they register.  Graph change events are
consumed in order and trigger re-expansion of the covered items.
"""

from __future__ import annotations

import hashlib
import json
import logging
import secrets
import sqlite3
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable

from . import protocol
from .model import (
    AppData,
    PolicyKind,
    SharingPolicy,
    SocialIdentity,
    Specificity,
    is_live,
    redact_for_viewer,
)
from .protocol import (
    AUTH_ERROR,
    NOT_FOUND,
    NOT_FOUND_REMOVE,
    OK,
    PARTIAL_FAILURE,
    SERVER_ERROR,
    VALIDATION_ERROR,
    DecodeError,
    Envelope,
    Method,
    error_response,
    ok_response,
)
from .provider import (
    ListChangeEvent,
    ListNotOwnedError,
    ProviderUnreachableError,
    UnknownListError,
    UnknownUserError,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_SCHEMA = """
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS users (peershare_id TEXT PRIMARY KEY);
CREATE TABLE IF NOT EXISTS identities (
    network TEXT NOT NULL,
    social_id TEXT NOT NULL,
    social_name TEXT NOT NULL DEFAULT '',
    peershare_id TEXT NOT NULL,
    PRIMARY KEY (network, social_id)
);
CREATE TABLE IF NOT EXISTS items (
    object_id INTEGER PRIMARY KEY,
    owner_peershare_id TEXT NOT NULL,
    data TEXT NOT NULL,
    policy_source TEXT NOT NULL DEFAULT 'app'
);
CREATE TABLE IF NOT EXISTS eligibility (
    object_id INTEGER NOT NULL,
    network TEXT NOT NULL,
    social_id TEXT NOT NULL,
    peershare_id TEXT,
    PRIMARY KEY (object_id, network, social_id)
);
CREATE TABLE IF NOT EXISTS processed_ops (
    op_key TEXT PRIMARY KEY,
    response TEXT NOT NULL
);
"""


class PolicySource(Enum):
    APP = "app"
    USER_OVERRIDE = "user_override"


@dataclass
class ProviderBinding:
    """One social network the server trusts: its provider handle and the
    application id our tokens must have been issued to."""

    network: str
    app_id: str
    provider: object  # anything satisfying the provider operation contract


@dataclass
class AuthContext:
    peershare_id: str
    identities: list[SocialIdentity]
    verified: SocialIdentity


class _AuthFailure(Exception):
    """Internal: collapses every token-check failure into one uniform error."""


def _auth_error() -> dict:
    return error_response(AUTH_ERROR, "authentication error")


class PeerShareServer:
    """Server core, independent of any transport.

    All operations return protocol response dicts; application-level
    failures never raise.  Mutations are serialized on one lock, so request
    handlers may call in from any number of threads.
    """

    def __init__(
        self,
        store_path: str = ":memory:",
        bindings: Iterable[ProviderBinding] = (),
        clock: Callable[[], float] = time.time,
        auto_pump: bool = True,
    ):
        self._clock = clock
        self._auto_pump = auto_pump
        self._bindings = {b.network: b for b in bindings}
        self._lock = threading.RLock()
        self._pump_lock = threading.Lock()  # one ordered event consumer
        self._db = sqlite3.connect(store_path, check_same_thread=False)
        self._db.executescript(_SCHEMA)
        stored = self._meta_get("schema_version")
        if stored is None:
            self._meta_set("schema_version", str(SCHEMA_VERSION))
        elif int(stored) != SCHEMA_VERSION:
            raise RuntimeError(f"store schema version {stored} not supported")
        self._db.commit()

    def close(self) -> None:
        with self._lock:
            self._db.close()

    # -- small helpers ------------------------------------------------------

    def _meta_get(self, key: str) -> str | None:
        row = self._db.execute("SELECT value FROM meta WHERE key=?", (key,)).fetchone()
        return row[0] if row else None

    def _meta_set(self, key: str, value: str) -> None:
        self._db.execute(
            "INSERT INTO meta (key, value) VALUES (?, ?) "
            "ON CONFLICT(key) DO UPDATE SET value=excluded.value",
            (key, value),
        )

    def _next_object_id(self) -> int:
        current = int(self._meta_get("next_object_id") or 1)
        self._meta_set("next_object_id", str(current + 1))
        return current

    def _identities_of(self, peershare_id: str) -> list[SocialIdentity]:
        rows = self._db.execute(
            "SELECT network, social_id, social_name FROM identities WHERE peershare_id=? "
            "ORDER BY network, social_id",
            (peershare_id,),
        ).fetchall()
        return [SocialIdentity(*row) for row in rows]

    def _lookup_identity(self, network: str, social_id: str) -> str | None:
        row = self._db.execute(
            "SELECT peershare_id FROM identities WHERE network=? AND social_id=?",
            (network, social_id),
        ).fetchone()
        return row[0] if row else None

    def _load_item(self, object_id: int) -> tuple[str, AppData, PolicySource] | None:
        row = self._db.execute(
            "SELECT owner_peershare_id, data, policy_source FROM items WHERE object_id=?",
            (object_id,),
        ).fetchone()
        if row is None:
            return None
        return (row[0], protocol.appdata_from_wire(json.loads(row[1])), PolicySource(row[2]))

    # -- authentication -----------------------------------------------------

    def _verify_against(self, token: str, identity: SocialIdentity) -> bool:
        binding = self._bindings.get(identity.network)
        if binding is None:
            return False
        user_id, app_id, valid = binding.provider.verify_token(token)
        return valid and app_id == binding.app_id and user_id == identity.social_id

    def _authenticate(self, token: str, peershare_id: str) -> AuthContext:
        """Token must be valid, issued to our app, and belong to one of the
        identities behind the claimed peershare id.  Any failure raises the
        same uniform error; callers never learn which check tripped."""
        if not token or not peershare_id:
            raise _AuthFailure()
        row = self._db.execute(
            "SELECT peershare_id FROM users WHERE peershare_id=?", (peershare_id,)
        ).fetchone()
        if row is None:
            raise _AuthFailure()
        identities = self._identities_of(peershare_id)
        for identity in identities:
            if self._verify_against(token, identity):
                return AuthContext(peershare_id, identities, identity)
        raise _AuthFailure()

    def _authenticate_claimed(self, token: str, claimed: SocialIdentity) -> None:
        if not token or not self._verify_against(token, claimed):
            raise _AuthFailure()

    # -- eligibility machinery ----------------------------------------------

    def _expand(self, owner: SocialIdentity, policy: SharingPolicy) -> set[str]:
        binding = self._bindings.get(owner.network)
        if binding is None:
            raise UnknownUserError(owner.network)
        return binding.provider.expand_policy(owner.social_id, policy)

    def _materialize(self, object_id: int, owner: SocialIdentity, policy: SharingPolicy) -> None:
        """Replace the item's eligibility rows from a fresh policy expansion.

        A policy pointing at a vanished (or no longer owned) list expands to
        nobody; the owner always retains access through ownership.
        """
        try:
            audience = self._expand(owner, policy)
        except (UnknownListError, ListNotOwnedError, UnknownUserError):
            audience = set()
        self._db.execute("DELETE FROM eligibility WHERE object_id=?", (object_id,))
        for social_id in sorted(audience):
            self._db.execute(
                "INSERT INTO eligibility (object_id, network, social_id, peershare_id) "
                "VALUES (?, ?, ?, ?)",
                (object_id, owner.network, social_id, self._lookup_identity(owner.network, social_id)),
            )

    # -- idempotent-operation replay -----------------------------------------

    def _replay(self, op_key: str | None) -> dict | None:
        if not op_key:
            return None
        row = self._db.execute(
            "SELECT response FROM processed_ops WHERE op_key=?", (op_key,)
        ).fetchone()
        return json.loads(row[0]) if row else None

    def _record_op(self, op_key: str | None, response: dict) -> None:
        if op_key:
            self._db.execute(
                "INSERT OR REPLACE INTO processed_ops (op_key, response) VALUES (?, ?)",
                (op_key, json.dumps(response, sort_keys=True)),
            )

    # -- protocol operations --------------------------------------------------

    def register(
        self, token: str, identity: SocialIdentity, existing_peershare_id: str | None = None
    ) -> dict:
        with self._lock:
            try:
                self._authenticate_claimed(token, identity)
            except _AuthFailure:
                return _auth_error()
            try:
                known = self._lookup_identity(identity.network, identity.social_id)
                if known is not None:
                    peershare_id = known
                elif existing_peershare_id:
                    row = self._db.execute(
                        "SELECT peershare_id FROM users WHERE peershare_id=?",
                        (existing_peershare_id,),
                    ).fetchone()
                    if row is None:
                        return error_response(NOT_FOUND, "unknown existing peershare id")
                    peershare_id = existing_peershare_id
                    self._insert_identity(identity, peershare_id)
                else:
                    peershare_id = "ps-" + secrets.token_hex(8)
                    self._db.execute("INSERT INTO users (peershare_id) VALUES (?)", (peershare_id,))
                    self._insert_identity(identity, peershare_id)
                self._db.commit()
                return ok_response(peershare_id=peershare_id)
            except Exception:
                self._db.rollback()
                raise

    def _insert_identity(self, identity: SocialIdentity, peershare_id: str) -> None:
        self._db.execute(
            "INSERT INTO identities (network, social_id, social_name, peershare_id) "
            "VALUES (?, ?, ?, ?)",
            (identity.network, identity.social_id, identity.social_name, peershare_id),
        )
        # Resolve eligibility rows that were waiting for this identity.
        self._db.execute(
            "UPDATE eligibility SET peershare_id=? WHERE network=? AND social_id=?",
            (peershare_id, identity.network, identity.social_id),
        )

    def upload(
        self,
        token: str,
        peershare_id: str,
        items: list[AppData],
        idempotency_key: str | None = None,
    ) -> dict:
        with self._lock:
            try:
                auth = self._authenticate(token, peershare_id)
            except _AuthFailure:
                return _auth_error()
            replayed = self._replay(idempotency_key)
            if replayed is not None:
                return replayed
            try:
                # Validate the whole batch before touching anything: one bad
                # item rejects the batch with no state change.
                identity_keys = {i.key() for i in auth.identities}
                detail = []
                for index, item in enumerate(items):
                    violations = protocol.validate_for_upload(item)
                    if item.owner is not None and item.owner.key() not in identity_keys:
                        violations.append("owner does not match authenticated user")
                    if violations:
                        detail.append({"index": index, "violations": violations})
                if detail:
                    return error_response(VALIDATION_ERROR, "invalid items in batch", detail)

                expansions = []
                for index, item in enumerate(items):
                    policy = item.policy or SharingPolicy.all_friends()
                    try:
                        self._expand(item.owner, policy)
                    except (UnknownListError, ListNotOwnedError) as exc:
                        return error_response(
                            VALIDATION_ERROR,
                            "sharing policy does not resolve",
                            [{"index": index, "violations": [str(exc)]}],
                        )
                    expansions.append(policy)

                now = self._clock()
                object_ids = []
                replaced: list[int] = []
                for item, policy in zip(items, expansions):
                    stored = AppData(
                        data_type=item.data_type,
                        data_value=item.data_value,
                        descriptor=item.descriptor,
                        policy=policy,
                        created_at=item.created_at or int(now),
                        expires_at=item.expires_at,
                        owner=item.owner,
                        creator=item.creator,
                        device_id=item.device_id,
                    )
                    replaced.extend(self._displace(peershare_id, stored, now))
                    object_id = self._next_object_id()
                    self._db.execute(
                        "INSERT INTO items (object_id, owner_peershare_id, data, policy_source) "
                        "VALUES (?, ?, ?, ?)",
                        (
                            object_id,
                            peershare_id,
                            json.dumps(protocol.appdata_to_wire(stored), sort_keys=True),
                            PolicySource.APP.value,
                        ),
                    )
                    self._materialize(object_id, stored.owner, policy)
                    object_ids.append(object_id)
                response = ok_response(object_ids=object_ids, replaced=replaced)
                self._record_op(idempotency_key, response)
                self._db.commit()
                return response
            except ProviderUnreachableError:
                self._db.rollback()
                return error_response(SERVER_ERROR, "social provider unreachable")
            except Exception:
                self._db.rollback()
                raise

    def _displace(self, owner_ps: str, incoming: AppData, now: float) -> list[int]:
        """Uniqueness enforcement: a live item with the same identity key is
        replaced by the incoming one.  User-specific items are keyed by
        (owner, data_type); device-specific ones also by device_id."""
        victims = []
        rows = self._db.execute(
            "SELECT object_id, data FROM items WHERE owner_peershare_id=?", (owner_ps,)
        ).fetchall()
        for object_id, data_json in rows:
            existing = protocol.appdata_from_wire(json.loads(data_json))
            if existing.data_type != incoming.data_type:
                continue
            if not is_live(existing, now):
                continue
            if existing.descriptor.specificity is not incoming.descriptor.specificity:
                continue
            if (
                incoming.descriptor.specificity is Specificity.DEVICE
                and existing.device_id != incoming.device_id
            ):
                continue
            victims.append(object_id)
        for object_id in victims:
            self._db.execute("DELETE FROM items WHERE object_id=?", (object_id,))
            self._db.execute("DELETE FROM eligibility WHERE object_id=?", (object_id,))
        return victims

    def update(
        self,
        token: str,
        peershare_id: str,
        updates: list[tuple[int, AppData]],
        idempotency_key: str | None = None,
    ) -> dict:
        with self._lock:
            try:
                auth = self._authenticate(token, peershare_id)
            except _AuthFailure:
                return _auth_error()
            replayed = self._replay(idempotency_key)
            if replayed is not None:
                return replayed
            try:
                identity_keys = {i.key() for i in auth.identities}
                results = []
                for object_id, item in updates:
                    loaded = self._load_item(object_id)
                    if loaded is None:
                        results.append({"object_id": object_id, "code": NOT_FOUND_REMOVE})
                        continue
                    owner_ps, current, source = loaded
                    if owner_ps != peershare_id:
                        results.append({"object_id": object_id, "code": AUTH_ERROR})
                        continue
                    violations = protocol.validate_for_upload(item)
                    if item.owner is not None and item.owner.key() not in identity_keys:
                        violations.append("owner does not match authenticated user")
                    if violations:
                        results.append(
                            {"object_id": object_id, "code": VALIDATION_ERROR, "violations": violations}
                        )
                        continue
                    # A user override pins the policy; app updates replace
                    # data fields only.  An absent policy keeps the current one.
                    if source is PolicySource.USER_OVERRIDE or item.policy is None:
                        effective = current.policy
                    else:
                        effective = item.policy
                    stored = AppData(
                        data_type=item.data_type,
                        data_value=item.data_value,
                        descriptor=item.descriptor,
                        policy=effective,
                        created_at=item.created_at or current.created_at,
                        expires_at=item.expires_at,
                        owner=item.owner,
                        creator=item.creator,
                        device_id=item.device_id,
                    )
                    self._db.execute(
                        "UPDATE items SET data=? WHERE object_id=?",
                        (json.dumps(protocol.appdata_to_wire(stored), sort_keys=True), object_id),
                    )
                    if effective != current.policy:
                        self._materialize(object_id, stored.owner, effective)
                    results.append({"object_id": object_id, "code": OK})
                response = ok_response(results=results)
                self._record_op(idempotency_key, response)
                self._db.commit()
                return response
            except ProviderUnreachableError:
                self._db.rollback()
                return error_response(SERVER_ERROR, "social provider unreachable")
            except Exception:
                self._db.rollback()
                raise

    def download(self, token: str, peershare_id: str) -> dict:
        if self._auto_pump:
            self.pump_changes(best_effort=True)
        with self._lock:
            try:
                self._authenticate(token, peershare_id)
            except _AuthFailure:
                return _auth_error()
            now = self._clock()
            views = []
            rows = self._db.execute(
                "SELECT i.object_id, i.owner_peershare_id, i.data, i.policy_source FROM items i "
                "WHERE i.owner_peershare_id=? OR EXISTS ("
                "  SELECT 1 FROM eligibility e WHERE e.object_id=i.object_id AND e.peershare_id=?"
                ") ORDER BY i.object_id",
                (peershare_id, peershare_id),
            ).fetchall()
            for object_id, owner_ps, data_json, policy_source in rows:
                data = protocol.appdata_from_wire(json.loads(data_json))
                if not is_live(data, now):
                    continue
                view = redact_for_viewer(data, object_id, owner_ps, peershare_id)
                wire = protocol.itemview_to_wire(view)
                if view.is_owner:
                    wire["policy_source"] = policy_source
                views.append(wire)
            return ok_response(items=views)

    def delete(
        self,
        token: str,
        peershare_id: str,
        object_ids: list[int],
        idempotency_key: str | None = None,
    ) -> dict:
        with self._lock:
            try:
                self._authenticate(token, peershare_id)
            except _AuthFailure:
                return _auth_error()
            replayed = self._replay(idempotency_key)
            if replayed is not None:
                return replayed
            try:
                deleted, failures = [], []
                for object_id in object_ids:
                    loaded = self._load_item(object_id)
                    if loaded is None:
                        failures.append({"object_id": object_id, "code": NOT_FOUND})
                        continue
                    if loaded[0] != peershare_id:
                        failures.append({"object_id": object_id, "code": AUTH_ERROR})
                        continue
                    self._db.execute("DELETE FROM items WHERE object_id=?", (object_id,))
                    self._db.execute("DELETE FROM eligibility WHERE object_id=?", (object_id,))
                    deleted.append(object_id)
                if failures:
                    response = error_response(
                        PARTIAL_FAILURE, "some deletions failed", failures, deleted=deleted
                    )
                else:
                    response = ok_response(deleted=deleted)
                self._record_op(idempotency_key, response)
                self._db.commit()
                return response
            except Exception:
                self._db.rollback()
                raise

    def unregister(self, token: str, peershare_id: str) -> dict:
        with self._lock:
            try:
                self._authenticate(token, peershare_id)
            except _AuthFailure:
                return _auth_error()
            try:
                owned = [
                    row[0]
                    for row in self._db.execute(
                        "SELECT object_id FROM items WHERE owner_peershare_id=?", (peershare_id,)
                    )
                ]
                for object_id in owned:
                    self._db.execute("DELETE FROM items WHERE object_id=?", (object_id,))
                    self._db.execute("DELETE FROM eligibility WHERE object_id=?", (object_id,))
                # The person may come back under a fresh id; their social ids
                # stay pending in other items' eligibility until then.
                self._db.execute(
                    "UPDATE eligibility SET peershare_id=NULL WHERE peershare_id=?", (peershare_id,)
                )
                self._db.execute("DELETE FROM identities WHERE peershare_id=?", (peershare_id,))
                self._db.execute("DELETE FROM users WHERE peershare_id=?", (peershare_id,))
                self._db.commit()
                return ok_response()
            except Exception:
                self._db.rollback()
                raise

    def policy_override(
        self, token: str, peershare_id: str, object_id: int, policy: SharingPolicy
    ) -> dict:
        with self._lock:
            try:
                self._authenticate(token, peershare_id)
            except _AuthFailure:
                return _auth_error()
            try:
                loaded = self._load_item(object_id)
                if loaded is None:
                    return error_response(NOT_FOUND, "no such object")
                owner_ps, current, _source = loaded
                if owner_ps != peershare_id:
                    return error_response(AUTH_ERROR, "authentication error")
                try:
                    self._expand(current.owner, policy)
                except (UnknownListError, ListNotOwnedError) as exc:
                    return error_response(VALIDATION_ERROR, f"sharing policy does not resolve: {exc}")
                stored = AppData(
                    data_type=current.data_type,
                    data_value=current.data_value,
                    descriptor=current.descriptor,
                    policy=policy,
                    created_at=current.created_at,
                    expires_at=current.expires_at,
                    owner=current.owner,
                    creator=current.creator,
                    device_id=current.device_id,
                )
                self._db.execute(
                    "UPDATE items SET data=?, policy_source=? WHERE object_id=?",
                    (
                        json.dumps(protocol.appdata_to_wire(stored), sort_keys=True),
                        PolicySource.USER_OVERRIDE.value,
                        object_id,
                    ),
                )
                self._materialize(object_id, stored.owner, policy)
                self._db.commit()
                return ok_response()
            except ProviderUnreachableError:
                self._db.rollback()
                return error_response(SERVER_ERROR, "social provider unreachable")
            except Exception:
                self._db.rollback()
                raise

    # -- change-event consumption ---------------------------------------------

    def on_list_change(self, network: str, event: ListChangeEvent) -> None:
        """Re-expand eligibility of every item the event may cover.

        Friendship edits (list_id None) are symmetric, so one event touches
        both endpoints' audiences; every all-friends item in the network is
        re-expanded to keep coverage exact.
        """
        with self._lock:
            rows = self._db.execute(
                "SELECT object_id, data FROM items ORDER BY object_id"
            ).fetchall()
            for object_id, data_json in rows:
                data = protocol.appdata_from_wire(json.loads(data_json))
                if data.owner is None or data.owner.network != network:
                    continue
                policy = data.policy or SharingPolicy.all_friends()
                if event.list_id is None:
                    covered = policy.kind is PolicyKind.ALL_FRIENDS
                else:
                    covered = (
                        policy.kind is PolicyKind.NAMED_LIST
                        and policy.list_ref == event.list_id
                        and data.owner.social_id == event.owner_social_id
                    )
                if covered:
                    self._materialize(object_id, data.owner, policy)
            self._db.commit()

    def pump_changes(self, best_effort: bool = False) -> int:
        """Consume pending provider events in change_seq order.

        Progress is persisted per event, so an unreachable provider never
        loses events; the next pump picks up where this one stopped.
        """
        processed = 0
        with self._pump_lock:
            for network, binding in sorted(self._bindings.items()):
                with self._lock:
                    last = int(self._meta_get(f"last_seq:{network}") or 0)
                try:
                    events = binding.provider.poll_changes(last)
                except ProviderUnreachableError:
                    if best_effort:
                        logger.warning("provider %s unreachable; events deferred", network)
                        continue
                    raise
                for event in sorted(events, key=lambda e: e.change_seq):
                    self.on_list_change(network, event)
                    with self._lock:
                        self._meta_set(f"last_seq:{network}", str(event.change_seq))
                        self._db.commit()
                    processed += 1
        return processed

    def purge_expired(self, now: float | None = None) -> int:
        """Drop dead items.  Downloads filter lazily, so cadence never
        affects what anyone can see."""
        with self._lock:
            now = self._clock() if now is None else now
            purged = 0
            rows = self._db.execute("SELECT object_id, data FROM items").fetchall()
            for object_id, data_json in rows:
                data = protocol.appdata_from_wire(json.loads(data_json))
                if not is_live(data, now):
                    self._db.execute("DELETE FROM items WHERE object_id=?", (object_id,))
                    self._db.execute("DELETE FROM eligibility WHERE object_id=?", (object_id,))
                    purged += 1
            self._db.commit()
            return purged

    # -- envelope dispatch ------------------------------------------------------

    def dispatch(self, request: Envelope | bytes | str) -> dict:
        """Handle one protocol request; the single entry point for transports."""
        try:
            env = request if isinstance(request, Envelope) else protocol.decode_envelope(request)
        except DecodeError as exc:
            return error_response(VALIDATION_ERROR, str(exc))
        if self._auto_pump and env.method is not Method.DOWNLOAD:
            self.pump_changes(best_effort=True)
        try:
            return self._dispatch_decoded(env)
        except DecodeError as exc:
            return error_response(VALIDATION_ERROR, str(exc))
        except Exception:
            logger.exception("unhandled error in %s", env.method.value)
            return error_response(SERVER_ERROR, "internal error")

    def _dispatch_decoded(self, env: Envelope) -> dict:
        body = env.body
        if env.method is Method.REGISTER:
            identity = protocol.identity_from_wire(body["identity"])
            existing = body.get("existing_peershare_id") or None
            return self.register(env.token, identity, existing)
        if env.method is Method.UPLOAD:
            items = [protocol.appdata_from_wire(obj) for obj in body["items"]]
            return self.upload(env.token, env.peershare_id, items, body.get("idempotency_key"))
        if env.method is Method.UPDATE:
            updates = []
            for entry in body["updates"]:
                if not isinstance(entry, dict) or "object_id" not in entry or "data" not in entry:
                    raise DecodeError("update entries need object_id and data", "updates")
                updates.append((int(entry["object_id"]), protocol.appdata_from_wire(entry["data"])))
            return self.update(env.token, env.peershare_id, updates, body.get("idempotency_key"))
        if env.method is Method.DOWNLOAD:
            return self.download(env.token, env.peershare_id)
        if env.method is Method.DELETE:
            object_ids = [int(x) for x in body["object_ids"]]
            return self.delete(env.token, env.peershare_id, object_ids, body.get("idempotency_key"))
        if env.method is Method.UNREGISTER:
            return self.unregister(env.token, env.peershare_id)
        if env.method is Method.POLICY:
            policy = protocol.policy_from_wire(body["sharing_policy"])
            return self.policy_override(
                env.token, env.peershare_id, int(body["object_id"]), policy
            )
        return error_response(SERVER_ERROR, f"unroutable method {env.method}")

    # -- inspection (oracles, CLI inspect) ---------------------------------------

    def state_digest(self) -> str:
        """Stable hash over the full store, for no-state-change assertions."""
        with self._lock:
            snapshot = {
                "users": sorted(r[0] for r in self._db.execute("SELECT peershare_id FROM users")),
                "identities": sorted(
                    self._db.execute(
                        "SELECT network, social_id, social_name, peershare_id FROM identities"
                    ).fetchall()
                ),
                "items": sorted(
                    self._db.execute(
                        "SELECT object_id, owner_peershare_id, data, policy_source FROM items"
                    ).fetchall()
                ),
                "eligibility": sorted(
                    (r[0], r[1], r[2], r[3] or "")
                    for r in self._db.execute(
                        "SELECT object_id, network, social_id, peershare_id FROM eligibility"
                    )
                ),
                "ops": sorted(
                    self._db.execute("SELECT op_key, response FROM processed_ops").fetchall()
                ),
                "next_object_id": self._meta_get("next_object_id") or "1",
            }
        raw = json.dumps(snapshot, sort_keys=True).encode("utf-8")
        return hashlib.sha256(raw).hexdigest()

    def dump_state(self) -> dict:
        with self._lock:
            items = []
            for object_id, owner_ps, data_json, source in self._db.execute(
                "SELECT object_id, owner_peershare_id, data, policy_source FROM items ORDER BY object_id"
            ):
                eligible = self._db.execute(
                    "SELECT network, social_id, peershare_id FROM eligibility WHERE object_id=? "
                    "ORDER BY network, social_id",
                    (object_id,),
                ).fetchall()
                items.append(
                    {
                        "object_id": object_id,
                        "owner_peershare_id": owner_ps,
                        "data": json.loads(data_json),
                        "policy_source": source,
                        "eligible": [
                            {"network": n, "social_id": s, "peershare_id": p}
                            for n, s, p in eligible
                        ],
                    }
                )
            users = [
                {
                    "peershare_id": ps,
                    "identities": [
                        {"network": i.network, "social_id": i.social_id, "social_name": i.social_name}
                        for i in self._identities_of(ps)
                    ],
                }
                for (ps,) in self._db.execute("SELECT peershare_id FROM users ORDER BY peershare_id")
            ]
            return {"users": users, "items": items}
