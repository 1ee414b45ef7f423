"""Hashing, Ed25519 signatures, addresses, Merkle trees, and canonical encoding.

Every preimage that gets hashed or signed anywhere in chainfab goes through
``canonical_encode``, so two nodes (or two languages) always agree on the
bytes.  See docs/encoding.md for the exact grammar.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any, Sequence

from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

DIGEST_SIZE = 32
SEED_SIZE = 32
PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64
ADDRESS_PREFIX = "cm1"
ADDRESS_BYTES = 20

ZERO_DIGEST = b"\x00" * DIGEST_SIZE
ZERO_ADDRESS = ADDRESS_PREFIX + "00" * ADDRESS_BYTES

_HEX_DIGITS = set("0123456789abcdef")


class SeedLengthError(ValueError):
    """Keypair seed is not exactly 32 bytes."""


class UnencodableError(TypeError):
    """Value contains a field kind canonical encoding does not admit."""


def hash_bytes(data: bytes) -> bytes:
    """SHA-256 digest of ``data`` (32 bytes)."""
    return hashlib.sha256(data).digest()


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 keypair; ``secret`` is the 32-byte seed and never leaves the wallet."""

    secret: bytes
    public: bytes

    @property
    def address(self) -> str:
        return derive_address(self.public)


def generate_keypair(seed: bytes) -> KeyPair:
    """Derive the Ed25519 keypair for a 32-byte seed.  Deterministic."""
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != SEED_SIZE:
        raise SeedLengthError(f"seed must be exactly {SEED_SIZE} bytes")
    secret = bytes(seed)
    private = Ed25519PrivateKey.from_private_bytes(secret)
    return KeyPair(secret=secret, public=private.public_key().public_bytes_raw())


def sign(secret: bytes, message: bytes) -> bytes:
    """Deterministic Ed25519 signature of ``message`` under the seed ``secret``."""
    if len(secret) != SEED_SIZE:
        raise SeedLengthError(f"secret must be exactly {SEED_SIZE} bytes")
    return Ed25519PrivateKey.from_private_bytes(bytes(secret)).sign(bytes(message))


def verify_signature(public: bytes, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` is valid for (public, message); never raises."""
    try:
        Ed25519PublicKey.from_public_bytes(bytes(public)).verify(
            bytes(signature), bytes(message)
        )
        return True
    except Exception:
        return False


def derive_address(public: bytes) -> str:
    """Account address: first 20 bytes of SHA-256(public key), hex with "cm1" prefix."""
    if len(public) != PUBLIC_KEY_SIZE:
        raise ValueError(f"public key must be {PUBLIC_KEY_SIZE} bytes")
    return ADDRESS_PREFIX + hash_bytes(bytes(public))[:ADDRESS_BYTES].hex()


def is_address(value: Any) -> bool:
    return (
        isinstance(value, str)
        and len(value) == len(ADDRESS_PREFIX) + 2 * ADDRESS_BYTES
        and value.startswith(ADDRESS_PREFIX)
        and all(c in _HEX_DIGITS for c in value[len(ADDRESS_PREFIX):])
    )


def is_hex_digest(value: Any) -> bool:
    return (
        isinstance(value, str)
        and len(value) == 2 * DIGEST_SIZE
        and all(c in _HEX_DIGITS for c in value)
    )


# --- Merkle trees ---------------------------------------------------------
#
# Binary tree over 32-byte leaves.  An odd level duplicates its last node;
# a single leaf is its own root; the empty list commits to SHA-256("").


@dataclass(frozen=True)
class MerkleProof:
    """Inclusion proof: bottom-up siblings plus their left/right placement."""

    leaf_index: int
    siblings: tuple[bytes, ...]
    directions: tuple[bool, ...]  # True: sibling sits to the right of the path


def merkle_root(leaves: Sequence[bytes]) -> bytes:
    if not leaves:
        return hash_bytes(b"")
    level = list(leaves)
    while len(level) > 1:
        if len(level) % 2 == 1:
            level.append(level[-1])
        level = [hash_bytes(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def merkle_prove(leaves: Sequence[bytes], index: int) -> MerkleProof:
    if not 0 <= index < len(leaves):
        raise IndexError(f"leaf index {index} out of range for {len(leaves)} leaves")
    siblings: list[bytes] = []
    directions: list[bool] = []
    level = list(leaves)
    pos = index
    while len(level) > 1:
        if len(level) % 2 == 1:
            level.append(level[-1])
        sibling_pos = pos ^ 1
        siblings.append(level[sibling_pos])
        directions.append(sibling_pos > pos)
        level = [hash_bytes(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
        pos //= 2
    return MerkleProof(index, tuple(siblings), tuple(directions))


def merkle_verify(root: bytes, leaf: bytes, proof: MerkleProof) -> bool:
    node = leaf
    for sibling, sibling_on_right in zip(proof.siblings, proof.directions):
        if sibling_on_right:
            node = hash_bytes(node + sibling)
        else:
            node = hash_bytes(sibling + node)
    return node == root


# --- Canonical encoding ---------------------------------------------------
#
# Canonical JSON: object keys sorted by code point, no whitespace, integers
# in base 10, byte strings as lowercase hex, UTF-8 output.  Floats are
# rejected outright so signatures can never depend on float formatting.


def _jsonable(value: Any) -> Any:
    if value is None or isinstance(value, (str, bool)):
        return value
    if isinstance(value, int):  # bool handled above; ints stay exact
        return value
    if isinstance(value, float):
        raise UnencodableError("floating-point values are not canonically encodable")
    if isinstance(value, (bytes, bytearray)):
        return bytes(value).hex()
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, dict):
        out = {}
        for key, item in value.items():
            if not isinstance(key, str):
                raise UnencodableError(f"object keys must be strings, got {type(key).__name__}")
            out[key] = _jsonable(item)
        return out
    raise UnencodableError(f"cannot canonically encode {type(value).__name__}")


def canonical_encode(value: Any) -> bytes:
    """Canonical JSON bytes for a structured record; the one signing/hashing preimage."""
    return json.dumps(
        _jsonable(value),
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    ).encode("utf-8")


def canonical_decode(data: bytes) -> Any:
    """Inverse of canonical_encode up to the hex rendering of byte fields."""
    return json.loads(data.decode("utf-8"))


def hash_canonical(value: Any) -> bytes:
    return hash_bytes(canonical_encode(value))
