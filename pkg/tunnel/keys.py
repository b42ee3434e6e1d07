"""
Curve25519 static keys and their base64 presentation.
"""
import base64
import binascii
import os
from dataclasses import dataclass, field
from typing import Callable

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey

from .errors import MalformedKey

KEY_LEN = 32
ENCODED_KEY_LEN = 44

# A random source: returns n random bytes.
RandomSource = Callable[[int], bytes]


def clamp(private: bytes) -> bytes:
    """Clamp a Curve25519 scalar: clear bits 0-2 and 255, set bit 254."""
    if len(private) != KEY_LEN:
        raise MalformedKey(f"private key must be {KEY_LEN} bytes, got {len(private)}")
    scalar = bytearray(private)
    scalar[0] &= 248
    scalar[31] &= 127
    scalar[31] |= 64
    return bytes(scalar)


def derive_public(private: bytes) -> bytes:
    """Return X25519(clamp(private), 9)."""
    key = X25519PrivateKey.from_private_bytes(clamp(private))
    return key.public_key().public_bytes_raw()


def dh(private: bytes, public: bytes) -> bytes:
    """X25519 shared secret between a private scalar and a peer point."""
    try:
        peer = X25519PublicKey.from_public_bytes(public)
    except ValueError as e:
        raise MalformedKey(f"invalid public key: {e}") from e
    return X25519PrivateKey.from_private_bytes(private).exchange(peer)


@dataclass(frozen=True)
class StaticKeypair:
    private: bytes = field(repr=False)
    public: bytes

    @classmethod
    def from_private(cls, private: bytes) -> "StaticKeypair":
        clamped = clamp(private)
        return cls(private=clamped, public=derive_public(clamped))


def generate_keypair(rng: RandomSource = os.urandom) -> StaticKeypair:
    """Draw 32 bytes from rng, clamp them and derive the public point."""
    return StaticKeypair.from_private(rng(KEY_LEN))


def encode_key(key: bytes) -> str:
    if len(key) != KEY_LEN:
        raise MalformedKey(f"key must be {KEY_LEN} bytes, got {len(key)}")
    return base64.b64encode(key).decode("ascii")


def decode_key(text: str) -> bytes:
    if len(text) != ENCODED_KEY_LEN or not text.endswith("="):
        raise MalformedKey(f"key must be {ENCODED_KEY_LEN} base64 characters ending in '='")
    try:
        key = base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError) as e:
        raise MalformedKey(f"invalid base64 key: {e}") from e
    if len(key) != KEY_LEN:
        raise MalformedKey(f"decoded key has {len(key)} bytes")
    return key
