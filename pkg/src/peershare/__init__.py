"""PeerShare: distribute application data items to social contacts."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
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
    is_live,
    redact_for_viewer,
    validate_app_data,
)
from .provider import MockProvider  # noqa: F401
from .server import PeerShareServer, ProviderBinding  # noqa: F401
