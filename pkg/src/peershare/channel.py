"""Pinned TLS channel to the server.

The client trusts exactly one certificate: the pinned one shipped with it.
The pin is the trust anchor for the handshake *and* the presented leaf is
compared byte-for-byte afterwards, so a rogue server holding any other
certificate (however validly CA-signed) is refused before a single
application byte leaves the client.
"""

from __future__ import annotations

import http.client
import os
import ssl


class ChannelError(Exception):
    """Base for secure-channel failures."""


class ChannelConfigError(ChannelError):
    """Missing/unreadable pin: fail closed, no connection attempt."""


class PinMismatchError(ChannelError):
    """The presented server certificate is not the pinned one."""


_PEM_BEGIN = "-----BEGIN CERTIFICATE-----"
_PEM_END = "-----END CERTIFICATE-----"


def load_pins(pin_path: str | os.PathLike) -> list[bytes]:
    """Read the pin file and return the DER bytes of every certificate in it.

    The normal deployment pins exactly one certificate; a file with several
    concatenated PEM blocks enables the pin-set extension (any match wins).
    """
    if not os.path.exists(pin_path):
        raise ChannelConfigError(f"pinned certificate not found: {pin_path}")
    with open(pin_path, encoding="ascii") as fh:
        text = fh.read()
    pins = []
    start = 0
    while True:
        begin = text.find(_PEM_BEGIN, start)
        if begin < 0:
            break
        end = text.find(_PEM_END, begin)
        if end < 0:
            break
        end += len(_PEM_END)
        try:
            pins.append(ssl.PEM_cert_to_DER_cert(text[begin:end]))
        except ValueError as exc:
            raise ChannelConfigError(f"pinned certificate unreadable: {exc}") from None
        start = end
    if not pins:
        raise ChannelConfigError(f"no certificate found in pin file: {pin_path}")
    return pins


def load_pin(pin_path: str | os.PathLike) -> bytes:
    """Single-pin convenience: the first certificate in the pin file."""
    return load_pins(pin_path)[0]


class PinnedHTTPSConnection(http.client.HTTPSConnection):
    """HTTPSConnection that only ever talks to the pinned certificate."""

    def __init__(self, host: str, port: int, pin_path: str | os.PathLike, timeout: float = 30.0):
        self._pins = load_pins(pin_path)
        context = ssl.SSLContext(ssl.PROTOCOL_TLS_CLIENT)
        context.check_hostname = False  # exact certificate match replaces name checks
        context.verify_mode = ssl.CERT_REQUIRED
        context.load_verify_locations(
            cadata="".join(ssl.DER_cert_to_PEM_cert(der) for der in self._pins)
        )
        super().__init__(host, port, timeout=timeout, context=context)

    def connect(self) -> None:
        try:
            super().connect()
        except ssl.SSLError as exc:
            raise PinMismatchError(f"server certificate rejected during handshake: {exc}") from None
        presented = self.sock.getpeercert(binary_form=True)
        if presented not in self._pins:
            self.close()
            raise PinMismatchError("server certificate does not match the pin")


def establish_pinned_channel(
    host: str, port: int, pin_path: str | os.PathLike, timeout: float = 30.0
) -> PinnedHTTPSConnection:
    """Connect and verify the pin; the returned connection is ready for use."""
    conn = PinnedHTTPSConnection(host, port, pin_path, timeout=timeout)
    conn.connect()
    return conn
