"""Built-in data types for the known applications of the system.

Each helper fills in the descriptor the application family expects:
proximity sensing distributes a device-address binding (private,
device-specific), opportunistic networking a node-id binding (private,
device-specific), friend-of-friend discovery a bearer token (private,
user-specific), and key distribution a public key (public, user-specific).
The data value itself is always opaque to the system.
"""

from __future__ import annotations

from .model import (
    AppData,
    AppIdentity,
    BindingType,
    DataDescriptor,
    Sensitivity,
    SocialIdentity,
    Specificity,
)

BDADDR_BINDING = "bdaddr-binding"
SCAMPI_BINDING = "scampi-id-binding"
BEARER_TOKEN = "bearer-token"
PUBLIC_KEY = "public-key"

KNOWN_TYPES = (BDADDR_BINDING, SCAMPI_BINDING, BEARER_TOKEN, PUBLIC_KEY)


def make_bdaddr_binding(
    value: bytes,
    device_id: str,
    owner: SocialIdentity | None = None,
    creator: AppIdentity | None = None,
    data_algorithm: str = "PLAIN",
    user_asserted: bool = False,
) -> AppData:
    """Binding between a Bluetooth device address and a social identity."""
    return AppData(
        data_type=BDADDR_BINDING,
        data_value=value,
        descriptor=DataDescriptor(
            data_algorithm=data_algorithm,
            specificity=Specificity.DEVICE,
            sensitivity=Sensitivity.PRIVATE,
            binding_type=BindingType.USER_ASSERTED if user_asserted else BindingType.OWNER_ASSERTED,
            description="Bluetooth device address binding",
        ),
        owner=owner,
        creator=creator,
        device_id=device_id,
    )


def make_scampi_binding(
    value: bytes,
    device_id: str,
    owner: SocialIdentity | None = None,
    creator: AppIdentity | None = None,
) -> AppData:
    """Binding between an opportunistic-network node id (a public-key hash)
    and a social identity."""
    return AppData(
        data_type=SCAMPI_BINDING,
        data_value=value,
        descriptor=DataDescriptor(
            data_algorithm="SHA-1",
            specificity=Specificity.DEVICE,
            sensitivity=Sensitivity.PRIVATE,
            description="opportunistic network node id binding",
        ),
        owner=owner,
        creator=creator,
        device_id=device_id,
    )


def make_bearer_token(
    value: bytes,
    owner: SocialIdentity | None = None,
    creator: AppIdentity | None = None,
) -> AppData:
    """Per-user capability distributed to friends as proof of friendship."""
    return AppData(
        data_type=BEARER_TOKEN,
        data_value=value,
        descriptor=DataDescriptor(
            specificity=Specificity.USER,
            sensitivity=Sensitivity.PRIVATE,
            description="friendship capability token",
        ),
        owner=owner,
        creator=creator,
    )


def make_public_key(
    value: bytes,
    owner: SocialIdentity | None = None,
    creator: AppIdentity | None = None,
) -> AppData:
    """Public key bound to a social identity; public but authentic."""
    return AppData(
        data_type=PUBLIC_KEY,
        data_value=value,
        descriptor=DataDescriptor(
            specificity=Specificity.USER,
            sensitivity=Sensitivity.PUBLIC,
            description="public key binding",
        ),
        owner=owner,
        creator=creator,
    )
