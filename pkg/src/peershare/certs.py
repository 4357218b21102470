"""Self-signed TLS certificate generation for the server and for tests."""

from __future__ import annotations

import datetime
import ipaddress
import os
import secrets

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import rsa
from cryptography.x509.oid import NameOID


def generate_self_signed(
    common_name: str,
    out_dir: str | os.PathLike,
    prefix: str = "server",
    days: int = 3650,
) -> tuple[str, str]:
    """Write <prefix>.crt / <prefix>.key under out_dir and return their paths.

    The certificate carries SANs for the common name plus localhost and
    127.0.0.1 so loopback deployments verify cleanly.
    """
    key = rsa.generate_private_key(public_exponent=65537, key_size=2048)
    # Unique DN per certificate: trust-store lookups key on the subject, and
    # two distinct self-signed certs sharing one DN would shadow each other.
    subject = x509.Name(
        [
            x509.NameAttribute(NameOID.COMMON_NAME, common_name),
            x509.NameAttribute(NameOID.ORGANIZATION_NAME, f"peershare-{secrets.token_hex(4)}"),
        ]
    )
    san_names: list[x509.GeneralName] = [x509.DNSName(common_name)]
    if common_name != "localhost":
        san_names.append(x509.DNSName("localhost"))
    san_names.append(x509.IPAddress(ipaddress.ip_address("127.0.0.1")))
    now = datetime.datetime.now(datetime.timezone.utc)
    cert = (
        x509.CertificateBuilder()
        .subject_name(subject)
        .issuer_name(subject)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now - datetime.timedelta(minutes=5))
        .not_valid_after(now + datetime.timedelta(days=days))
        .add_extension(x509.SubjectAlternativeName(san_names), critical=False)
        .add_extension(x509.BasicConstraints(ca=True, path_length=None), critical=True)
        .sign(key, hashes.SHA256())
    )
    os.makedirs(out_dir, exist_ok=True)
    cert_path = os.path.join(out_dir, f"{prefix}.crt")
    key_path = os.path.join(out_dir, f"{prefix}.key")
    with open(cert_path, "wb") as fh:
        fh.write(cert.public_bytes(serialization.Encoding.PEM))
    with open(key_path, "wb") as fh:
        fh.write(
            key.private_bytes(
                serialization.Encoding.PEM,
                serialization.PrivateFormat.TraditionalOpenSSL,
                serialization.NoEncryption(),
            )
        )
    return cert_path, key_path
