"""Domain types shared by the server, the client service and the protocol.

Everything in here is a plain value type or a total function over value
types: no I/O, no clocks, no storage.  The wire-level field names for these
types live in :mod:`peershare.protocol`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum


class Specificity(Enum):
    DEVICE = "device"
    USER = "user"


class Sensitivity(Enum):
    PUBLIC = "public"
    PRIVATE = "private"


class BindingType(Enum):
    OWNER_ASSERTED = "owner"
    USER_ASSERTED = "user_asserted"


class PolicyKind(Enum):
    ALL_FRIENDS = "all_friends"
    NAMED_LIST = "list"


# expires_at value meaning "never expires"
NEVER_EXPIRES = 0


@dataclass(frozen=True)
class SocialIdentity:
    """A person inside one social network.

    The (network, social_id) pair is the identity key; social_name is
    display-only and never used for comparison.
    """

    network: str
    social_id: str
    social_name: str = ""

    def key(self) -> tuple[str, str]:
        return (self.network, self.social_id)


@dataclass(frozen=True)
class AppIdentity:
    """Platform-specific identifier of the application that created an item.

    On platforms with package signing the app_id is a composite rendered as
    "package:keyhash"; equality is exact string equality on both fields.
    """

    platform: str
    app_id: str

    def canonical(self) -> str:
        return f"{self.platform}/{self.app_id}"


@dataclass(frozen=True)
class DataDescriptor:
    """Describes how a data value was produced and how it may be handled."""

    data_algorithm: str = "PLAIN"
    specificity: Specificity = Specificity.USER
    sensitivity: Sensitivity = Sensitivity.PRIVATE
    binding_type: BindingType = BindingType.OWNER_ASSERTED
    description: str = ""


@dataclass(frozen=True)
class SharingPolicy:
    """Audience for an item: every friend, or one named provider list."""

    kind: PolicyKind
    list_ref: str = ""

    @classmethod
    def all_friends(cls) -> "SharingPolicy":
        return cls(PolicyKind.ALL_FRIENDS)

    @classmethod
    def named_list(cls, list_ref: str) -> "SharingPolicy":
        return cls(PolicyKind.NAMED_LIST, list_ref)


@dataclass
class AppData:
    """One distributable item.

    ``policy=None`` means the uploading application did not specify a
    sharing policy; the server substitutes its default (all friends).
    ``expires_at=0`` means the item never expires.
    """

    data_type: str
    data_value: bytes
    descriptor: DataDescriptor = field(default_factory=DataDescriptor)
    policy: SharingPolicy | None = None
    created_at: int = 0
    expires_at: int = NEVER_EXPIRES
    owner: SocialIdentity | None = None
    creator: AppIdentity | None = None
    device_id: str = ""


@dataclass
class ItemView:
    """What a downloading user is allowed to see of a stored item.

    Non-owners never see the object id, and ``data.policy`` is stripped for
    them before the view is built.  ``object_id`` is None exactly when
    ``is_owner`` is False.
    """

    data: AppData
    is_owner: bool
    object_id: int | None = None


def validate_app_data(item: AppData) -> list[str]:
    """Check every AppData invariant; return the violated ones by name.

    Total: never raises, an empty list means the item is valid.
    """
    violations = []
    if not item.data_type:
        violations.append("data_type empty")
    if not item.data_value:
        violations.append("data_value empty")
    if item.owner is None:
        violations.append("owner missing")
    else:
        if not item.owner.network:
            violations.append("owner network empty")
        if not item.owner.social_id:
            violations.append("owner social_id empty")
    if item.creator is None:
        violations.append("creator missing")
    else:
        if not item.creator.platform:
            violations.append("creator platform empty")
        if not item.creator.app_id:
            violations.append("creator app_id empty")
    if item.expires_at != NEVER_EXPIRES and item.expires_at < item.created_at:
        violations.append("expiry before creation")
    if item.descriptor.specificity is Specificity.USER and item.device_id:
        violations.append("device_id on user-specific item")
    if item.descriptor.specificity is Specificity.DEVICE and not item.device_id:
        violations.append("device_id missing on device-specific item")
    if item.policy is not None:
        if item.policy.kind is PolicyKind.ALL_FRIENDS and item.policy.list_ref:
            violations.append("list_ref on all_friends policy")
        if item.policy.kind is PolicyKind.NAMED_LIST and not item.policy.list_ref:
            violations.append("list_ref missing on list policy")
    return violations


def is_live(item: AppData, now: int | float) -> bool:
    """True while the item is valid.  The expiry instant itself is dead."""
    return item.expires_at == NEVER_EXPIRES or now < item.expires_at


def redact_for_viewer(
    data: AppData,
    object_id: int,
    owner_peershare_id: str,
    viewer_peershare_id: str,
) -> ItemView:
    """Build the view of a stored item for a given downloading user.

    Owners see everything including the object id.  Everyone else gets the
    data fields with the sharing policy stripped and no object id.
    Redacting an already-redacted view changes nothing.
    """
    is_owner = viewer_peershare_id == owner_peershare_id
    if is_owner:
        return ItemView(data=replace(data), is_owner=True, object_id=object_id)
    return ItemView(data=replace(data, policy=None), is_owner=False, object_id=None)
