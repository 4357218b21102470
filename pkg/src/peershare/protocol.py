"""Wire encoding, message schemas and error codes.

One canonical encoding is used everywhere: HTTP bodies, the agent's local
IPC socket and the golden files under tests/golden/.  It is UTF-8 JSON with
sorted keys and compact separators, binary values base64, timestamps integer
seconds UTC.  Decoders ignore unknown fields (forward compatibility) and
report missing required fields by name.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .model import (
    AppData,
    AppIdentity,
    BindingType,
    DataDescriptor,
    ItemView,
    PolicyKind,
    Sensitivity,
    SharingPolicy,
    SocialIdentity,
    Specificity,
    validate_app_data,
)

PROTOCOL_VERSION = 1


class Method(Enum):
    REGISTER = "register"
    UPLOAD = "upload"
    UPDATE = "update"
    DOWNLOAD = "download"
    DELETE = "delete"
    UNREGISTER = "unregister"
    POLICY = "policy"


# Application-level error codes carried in response bodies.
AUTH_ERROR = "auth_error"
VALIDATION_ERROR = "validation_error"
NOT_FOUND = "not_found"
NOT_FOUND_REMOVE = "not_found_remove"  # only in UPDATE per-item results
ACL_DENIED = "acl_denied"
PARTIAL_FAILURE = "partial_failure"
SERVER_ERROR = "server_error"

OK = "ok"


class ProtocolError(Exception):
    """Base for encode/decode failures."""


class DecodeError(ProtocolError):
    """Malformed bytes or a schema violation; names the offending field."""

    def __init__(self, message: str, field_name: str = ""):
        super().__init__(message)
        self.field_name = field_name


@dataclass
class Envelope:
    """One request: method, credentials and a method-specific body.

    ``peershare_id`` is empty only for REGISTER; every other request must
    carry it along with the access token.
    """

    method: Method
    token: str
    peershare_id: str = ""
    body: dict[str, Any] = field(default_factory=dict)
    v: int = PROTOCOL_VERSION


def canonical_json(obj: Any) -> bytes:
    """The one serialization used for wire bodies, IPC frames and goldens."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _require(obj: dict, *, key: str, where: str) -> Any:
    if key not in obj:
        raise DecodeError(f"missing required field '{key}' in {where}", key)
    return obj[key]


def _enum_from_wire(enum_cls, value: Any, key: str):
    try:
        return enum_cls(value)
    except ValueError:
        raise DecodeError(f"bad value {value!r} for field '{key}'", key) from None


def identity_to_wire(identity: SocialIdentity) -> dict:
    return {
        "network": identity.network,
        "social_id": identity.social_id,
        "social_name": identity.social_name,
    }


def identity_from_wire(obj: Any, where: str = "identity") -> SocialIdentity:
    if not isinstance(obj, dict):
        raise DecodeError(f"{where} must be an object", where)
    return SocialIdentity(
        network=str(_require(obj, key="network", where=where)),
        social_id=str(_require(obj, key="social_id", where=where)),
        social_name=str(obj.get("social_name", "")),
    )


def policy_to_wire(policy: SharingPolicy) -> dict:
    if policy.kind is PolicyKind.ALL_FRIENDS:
        return {"kind": "all_friends"}
    return {"kind": "list", "list_ref": policy.list_ref}


def policy_from_wire(obj: Any) -> SharingPolicy:
    if not isinstance(obj, dict):
        raise DecodeError("sharing_policy must be an object", "sharing_policy")
    kind = _enum_from_wire(PolicyKind, _require(obj, key="kind", where="sharing_policy"), "kind")
    if kind is PolicyKind.NAMED_LIST:
        return SharingPolicy.named_list(str(_require(obj, key="list_ref", where="sharing_policy")))
    return SharingPolicy.all_friends()


def appdata_to_wire(item: AppData) -> dict:
    """Serialize an item with the canonical field names.

    ``sharing_policy`` is omitted when the application left the policy
    unspecified; the server applies its default on upload.
    """
    wire: dict[str, Any] = {
        "data_type": item.data_type,
        "data_value": base64.b64encode(item.data_value).decode("ascii"),
        "data_algorithm": item.descriptor.data_algorithm,
        "specificity": item.descriptor.specificity.value,
        "sensitivity": item.descriptor.sensitivity.value,
        "binding_type": item.descriptor.binding_type.value,
        "description": item.descriptor.description,
        "created_at": item.created_at,
        "expires_at": item.expires_at,
        "owner": identity_to_wire(item.owner) if item.owner else None,
        "creator": {"platform": item.creator.platform, "app_id": item.creator.app_id}
        if item.creator
        else None,
        "device_id": item.device_id,
    }
    if item.policy is not None:
        wire["sharing_policy"] = policy_to_wire(item.policy)
    return wire


def appdata_from_wire(obj: Any, where: str = "item") -> AppData:
    if not isinstance(obj, dict):
        raise DecodeError(f"{where} must be an object", where)
    raw_value = _require(obj, key="data_value", where=where)
    try:
        data_value = base64.b64decode(raw_value, validate=True)
    except Exception:
        raise DecodeError("data_value is not valid base64", "data_value") from None
    descriptor = DataDescriptor(
        data_algorithm=str(_require(obj, key="data_algorithm", where=where)),
        specificity=_enum_from_wire(
            Specificity, _require(obj, key="specificity", where=where), "specificity"
        ),
        sensitivity=_enum_from_wire(
            Sensitivity, _require(obj, key="sensitivity", where=where), "sensitivity"
        ),
        binding_type=_enum_from_wire(
            BindingType, _require(obj, key="binding_type", where=where), "binding_type"
        ),
        description=str(obj.get("description", "")),
    )
    owner_obj = _require(obj, key="owner", where=where)
    creator_obj = _require(obj, key="creator", where=where)
    creator = None
    if creator_obj is not None:
        if not isinstance(creator_obj, dict):
            raise DecodeError("creator must be an object", "creator")
        creator = AppIdentity(
            platform=str(_require(creator_obj, key="platform", where="creator")),
            app_id=str(_require(creator_obj, key="app_id", where="creator")),
        )
    policy = None
    if "sharing_policy" in obj and obj["sharing_policy"] is not None:
        policy = policy_from_wire(obj["sharing_policy"])
    return AppData(
        data_type=str(_require(obj, key="data_type", where=where)),
        data_value=data_value,
        descriptor=descriptor,
        policy=policy,
        created_at=int(_require(obj, key="created_at", where=where)),
        expires_at=int(_require(obj, key="expires_at", where=where)),
        owner=identity_from_wire(owner_obj, "owner") if owner_obj is not None else None,
        creator=creator,
        device_id=str(obj.get("device_id", "")),
    )


def itemview_to_wire(view: ItemView) -> dict:
    """Serialize a download view.

    For non-owners the keys ``sharing_policy`` and ``object_id`` are never
    present, not even with null values.
    """
    wire = appdata_to_wire(view.data)
    if not view.is_owner:
        wire.pop("sharing_policy", None)
    wire["is_owner"] = view.is_owner
    if view.is_owner and view.object_id is not None:
        wire["object_id"] = view.object_id
    return wire


def itemview_from_wire(obj: Any) -> ItemView:
    data = appdata_from_wire(obj, where="item")
    is_owner = bool(obj.get("is_owner", False))
    object_id = obj.get("object_id") if is_owner else None
    return ItemView(data=data, is_owner=is_owner, object_id=object_id)


def validate_for_upload(item: AppData) -> list[str]:
    """Local validation plus the upload-only rules.

    User-asserted bindings are valid items locally but must never be sent
    to the server.
    """
    violations = validate_app_data(item)
    if item.descriptor.binding_type is BindingType.USER_ASSERTED:
        violations.append("user-asserted binding not uploadable")
    return violations


# Per-method body schemas: field name -> expected container type (or None
# for any).  Only structural requirements live here; semantic checks are the
# server's job.
_BODY_SCHEMAS: dict[Method, dict[str, type | None]] = {
    Method.REGISTER: {"identity": dict},
    Method.UPLOAD: {"items": list},
    Method.UPDATE: {"updates": list},
    Method.DOWNLOAD: {},
    Method.DELETE: {"object_ids": list},
    Method.UNREGISTER: {},
    Method.POLICY: {"object_id": None, "sharing_policy": dict},
}


def encode_envelope(env: Envelope) -> bytes:
    message: dict[str, Any] = {
        "v": env.v,
        "method": env.method.value,
        "token": env.token,
        "body": env.body,
    }
    if env.method is not Method.REGISTER:
        message["peershare_id"] = env.peershare_id
    return canonical_json(message)


def decode_envelope(raw: bytes | str) -> Envelope:
    """Parse a request envelope.

    A missing or blank token decodes fine (the server answers AUTH_ERROR);
    a missing peershare_id on a non-REGISTER request is a schema violation.
    """
    try:
        obj = json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise DecodeError(f"malformed encoding: {exc}") from None
    if not isinstance(obj, dict):
        raise DecodeError("envelope must be an object")
    method = _enum_from_wire(Method, _require(obj, key="method", where="envelope"), "method")
    body = obj.get("body")
    if body is None:
        raise DecodeError("missing required field 'body' in envelope", "body")
    if not isinstance(body, dict):
        raise DecodeError("body must be an object", "body")
    peershare_id = str(obj.get("peershare_id", ""))
    if method is not Method.REGISTER and "peershare_id" not in obj:
        raise DecodeError("missing required field 'peershare_id' in envelope", "peershare_id")
    schema = _BODY_SCHEMAS[method]
    for key, expected in schema.items():
        value = _require(body, key=key, where=f"{method.value} body")
        if expected is not None and not isinstance(value, expected):
            raise DecodeError(
                f"field '{key}' in {method.value} body must be {expected.__name__}", key
            )
    return Envelope(
        method=method,
        token=str(obj.get("token", "")),
        peershare_id=peershare_id,
        body=body,
        v=int(obj.get("v", PROTOCOL_VERSION)),
    )


def ok_response(**fields: Any) -> dict:
    response = {"status": OK}
    response.update(fields)
    return response


def error_response(code: str, message: str, detail: list | None = None, **fields: Any) -> dict:
    response: dict[str, Any] = {"status": "error", "code": code, "message": message}
    if detail is not None:
        response["detail"] = detail
    response.update(fields)
    return response


def encode_response(response: dict) -> bytes:
    return canonical_json(response)


def decode_response(raw: bytes | str) -> dict:
    try:
        obj = json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise DecodeError(f"malformed encoding: {exc}") from None
    if not isinstance(obj, dict):
        raise DecodeError("response must be an object")
    if "status" not in obj:
        raise DecodeError("missing required field 'status' in response", "status")
    return obj
