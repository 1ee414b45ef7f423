"""Transaction wire format, identity, signing, and builders.

A transaction is a canonical-JSON object ``{kind, payload, sender_public,
signature}``; Coinbase carries no key or signature.  The signing preimage is
the same object minus ``signature``; the transaction id is the SHA-256 of the
full object.  Schemas are documented in docs/tx-schema.md.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

from .crypto import (
    KeyPair,
    PUBLIC_KEY_SIZE,
    SIGNATURE_SIZE,
    canonical_encode,
    hash_bytes,
    is_address,
    is_hex_digest,
    sign,
    verify_signature,
)

KIND_REQUEST = "ServiceRequest"
KIND_OFFER = "ServiceOffer"
KIND_ACCEPTANCE = "OfferAcceptance"
KIND_CONFIRMATION = "DeliveryConfirmation"
KIND_TRANSFER = "Transfer"
KIND_COINBASE = "Coinbase"

TX_KINDS = (
    KIND_REQUEST,
    KIND_OFFER,
    KIND_ACCEPTANCE,
    KIND_CONFIRMATION,
    KIND_TRANSFER,
    KIND_COINBASE,
)

MAX_TEXT_FIELD = 4096


class MalformedTransaction(ValueError):
    """Wire object is not a structurally valid transaction."""


@dataclass(frozen=True)
class Transaction:
    kind: str
    payload: dict
    sender_public: Optional[bytes] = None
    signature: Optional[bytes] = None

    def to_wire(self) -> dict:
        wire: dict[str, Any] = {"kind": self.kind, "payload": dict(self.payload)}
        if self.sender_public is not None:
            wire["sender_public"] = self.sender_public.hex()
        if self.signature is not None:
            wire["signature"] = self.signature.hex()
        return wire

    def signing_bytes(self) -> bytes:
        wire = self.to_wire()
        wire.pop("signature", None)
        return canonical_encode(wire)

    @property
    def tx_id(self) -> bytes:
        return hash_bytes(canonical_encode(self.to_wire()))

    @property
    def id_hex(self) -> str:
        return self.tx_id.hex()

    def verify(self) -> bool:
        """Signature check; Coinbase (unsigned by design) verifies vacuously."""
        if self.kind == KIND_COINBASE:
            return self.sender_public is None and self.signature is None
        if self.sender_public is None or self.signature is None:
            return False
        return verify_signature(self.sender_public, self.signing_bytes(), self.signature)

    @classmethod
    def from_wire(cls, obj: Any) -> "Transaction":
        if not isinstance(obj, dict):
            raise MalformedTransaction("transaction must be an object")
        unknown = set(obj) - {"kind", "payload", "sender_public", "signature"}
        if unknown:
            raise MalformedTransaction(f"unknown transaction fields: {sorted(unknown)}")
        kind = obj.get("kind")
        if kind not in TX_KINDS:
            raise MalformedTransaction(f"unknown transaction kind: {kind!r}")
        payload = obj.get("payload")
        if not isinstance(payload, dict):
            raise MalformedTransaction("payload must be an object")
        sender_public = _opt_hex_bytes(obj.get("sender_public"), PUBLIC_KEY_SIZE, "sender_public")
        signature = _opt_hex_bytes(obj.get("signature"), SIGNATURE_SIZE, "signature")
        if kind == KIND_COINBASE:
            if sender_public is not None or signature is not None:
                raise MalformedTransaction("coinbase carries no key or signature")
        else:
            if sender_public is None or signature is None:
                raise MalformedTransaction(f"{kind} requires sender_public and signature")
        tx = cls(kind=kind, payload=payload, sender_public=sender_public, signature=signature)
        shape_error = check_shape(tx)
        if shape_error:
            raise MalformedTransaction(shape_error)
        return tx


def _opt_hex_bytes(value: Any, size: int, field: str) -> Optional[bytes]:
    if value is None:
        return None
    if not isinstance(value, str):
        raise MalformedTransaction(f"{field} must be a hex string")
    try:
        raw = bytes.fromhex(value)
    except ValueError as exc:
        raise MalformedTransaction(f"{field} is not valid hex") from exc
    if len(raw) != size or value != raw.hex():
        raise MalformedTransaction(f"{field} must be {size} bytes of lowercase hex")
    return raw


_PAYLOAD_FIELDS = {
    KIND_REQUEST: ("product_spec", "process_tag", "due_date", "max_price"),
    KIND_OFFER: ("request_id", "quoted_price", "promised_due_date"),
    KIND_ACCEPTANCE: ("request_id", "offer_id"),
    KIND_CONFIRMATION: ("request_id",),
    KIND_TRANSFER: ("to", "amount"),
    KIND_COINBASE: ("to", "amount", "height"),
}


def check_shape(tx: Transaction) -> Optional[str]:
    """Structural payload check per kind; returns a reason string or None."""
    expected = _PAYLOAD_FIELDS[tx.kind]
    got = set(tx.payload)
    if got != set(expected):
        return f"{tx.kind} payload must have fields {sorted(expected)}, got {sorted(got)}"
    p = tx.payload
    if tx.kind == KIND_REQUEST:
        if not _is_text(p["product_spec"]) or not _is_text(p["process_tag"]):
            return "product_spec and process_tag must be short strings"
        if not _is_positive_int(p["due_date"]) or not _is_positive_int(p["max_price"]):
            return "due_date and max_price must be positive integers"
    elif tx.kind == KIND_OFFER:
        if not is_hex_digest(p["request_id"]):
            return "request_id must be a 64-char hex digest"
        if not _is_positive_int(p["quoted_price"]) or not _is_positive_int(p["promised_due_date"]):
            return "quoted_price and promised_due_date must be positive integers"
    elif tx.kind == KIND_ACCEPTANCE:
        if not is_hex_digest(p["request_id"]) or not is_hex_digest(p["offer_id"]):
            return "request_id and offer_id must be 64-char hex digests"
    elif tx.kind == KIND_CONFIRMATION:
        if not is_hex_digest(p["request_id"]):
            return "request_id must be a 64-char hex digest"
    elif tx.kind == KIND_TRANSFER:
        if not is_address(p["to"]):
            return "to must be a cm1 address"
        if not _is_positive_int(p["amount"]):
            return "amount must be a positive integer"
    elif tx.kind == KIND_COINBASE:
        if not is_address(p["to"]):
            return "to must be a cm1 address"
        if not _is_positive_int(p["amount"]):
            return "amount must be a positive integer"
        if not isinstance(p["height"], int) or isinstance(p["height"], bool) or p["height"] < 1:
            return "height must be an integer >= 1"
    return None


def _is_text(value: Any) -> bool:
    return isinstance(value, str) and 0 < len(value) <= MAX_TEXT_FIELD


def _is_positive_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= 1


def _signed(keypair: KeyPair, kind: str, payload: dict) -> Transaction:
    unsigned = Transaction(kind=kind, payload=payload, sender_public=keypair.public)
    signature = sign(keypair.secret, unsigned.signing_bytes())
    tx = Transaction(kind=kind, payload=payload, sender_public=keypair.public, signature=signature)
    shape_error = check_shape(tx)
    if shape_error:
        raise MalformedTransaction(shape_error)
    return tx


def make_request(keypair: KeyPair, product_spec: str, process_tag: str,
                 due_date: int, max_price: int) -> Transaction:
    return _signed(keypair, KIND_REQUEST, {
        "product_spec": product_spec,
        "process_tag": process_tag,
        "due_date": due_date,
        "max_price": max_price,
    })


def make_offer(keypair: KeyPair, request_id: str, quoted_price: int,
               promised_due_date: int) -> Transaction:
    return _signed(keypair, KIND_OFFER, {
        "request_id": request_id,
        "quoted_price": quoted_price,
        "promised_due_date": promised_due_date,
    })


def make_acceptance(keypair: KeyPair, request_id: str, offer_id: str) -> Transaction:
    return _signed(keypair, KIND_ACCEPTANCE, {"request_id": request_id, "offer_id": offer_id})


def make_confirmation(keypair: KeyPair, request_id: str) -> Transaction:
    return _signed(keypair, KIND_CONFIRMATION, {"request_id": request_id})


def make_transfer(keypair: KeyPair, to: str, amount: int) -> Transaction:
    return _signed(keypair, KIND_TRANSFER, {"to": to, "amount": amount})


def make_coinbase(miner: str, amount: int, height: int) -> Transaction:
    # height in the payload keeps every coinbase id unique across the chain
    tx = Transaction(kind=KIND_COINBASE, payload={"to": miner, "amount": amount, "height": height})
    shape_error = check_shape(tx)
    if shape_error:
        raise MalformedTransaction(shape_error)
    return tx
