"""Marketplace ledger: deterministic transaction validation and state transitions.

Account balances plus per-request lifecycle records.  Accepting an offer is an
atomic exchange: the quoted price moves from the customer's balance into
escrow in the same transition that marks the request ACCEPTED; the customer's
delivery confirmation releases escrow to the provider.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from .crypto import derive_address, hash_canonical
from .tx import (
    KIND_ACCEPTANCE,
    KIND_COINBASE,
    KIND_CONFIRMATION,
    KIND_OFFER,
    KIND_REQUEST,
    KIND_TRANSFER,
    Transaction,
    check_shape,
)

STATUS_OPEN = "OPEN"
STATUS_ACCEPTED = "ACCEPTED"
STATUS_FULFILLED = "FULFILLED"
STATUS_EXPIRED = "EXPIRED"

# Violation codes returned by validate_transaction.
UNKNOWN_REQUEST = "UnknownRequest"
UNKNOWN_OFFER = "UnknownOffer"
REQUEST_CLOSED = "RequestClosed"
OVER_BUDGET = "OverBudget"
LATE_OFFER = "LateOffer"
NOT_CUSTOMER = "NotCustomer"
INSUFFICIENT_FUNDS = "InsufficientFunds"
REPLAYED_TRANSACTION = "ReplayedTransaction"
BAD_SIGNATURE = "BadSignature"
BAD_COINBASE = "BadCoinbase"
MALFORMED = "MalformedTransaction"


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str = ""

    def __str__(self) -> str:  # pragma: no cover - debugging aid
        return f"{self.code}: {self.detail}" if self.detail else self.code


class ContractError(Exception):
    """apply_transaction was called on a transaction that does not validate."""

    def __init__(self, violation: Violation):
        super().__init__(str(violation))
        self.violation = violation


class UnknownRequestError(LookupError):
    pass


class NoOffersError(LookupError):
    pass


@dataclass
class OfferEntry:
    provider: str
    quoted_price: int
    promised_due_date: int


@dataclass
class RequestRecord:
    customer: str
    product_spec: str
    process_tag: str
    due_date: int
    max_price: int
    offers: dict[str, OfferEntry] = field(default_factory=dict)
    status: str = STATUS_OPEN
    accepted_offer: Optional[str] = None
    escrow: int = 0

    def clone(self) -> "RequestRecord":
        return RequestRecord(
            customer=self.customer,
            product_spec=self.product_spec,
            process_tag=self.process_tag,
            due_date=self.due_date,
            max_price=self.max_price,
            offers={oid: OfferEntry(o.provider, o.quoted_price, o.promised_due_date)
                    for oid, o in self.offers.items()},
            status=self.status,
            accepted_offer=self.accepted_offer,
            escrow=self.escrow,
        )

    def to_canonical(self) -> dict:
        return {
            "customer": self.customer,
            "product_spec": self.product_spec,
            "process_tag": self.process_tag,
            "due_date": self.due_date,
            "max_price": self.max_price,
            "offers": {
                oid: {
                    "provider": o.provider,
                    "quoted_price": o.quoted_price,
                    "promised_due_date": o.promised_due_date,
                }
                for oid, o in self.offers.items()
            },
            "status": self.status,
            "accepted_offer": self.accepted_offer,
            "escrow": self.escrow,
        }


@dataclass
class LedgerState:
    """World state after applying a block sequence.  Mutated only by apply_* calls."""

    balances: dict[str, int] = field(default_factory=dict)
    requests: dict[str, RequestRecord] = field(default_factory=dict)
    seen_tx_ids: set[str] = field(default_factory=set)
    height: int = 0
    issued_supply: int = 0
    genesis_supply: int = 0

    @classmethod
    def genesis(cls, allocations: Mapping[str, int]) -> "LedgerState":
        balances = {addr: int(amount) for addr, amount in allocations.items()}
        return cls(balances=balances, genesis_supply=sum(balances.values()))

    def clone(self) -> "LedgerState":
        return LedgerState(
            balances=dict(self.balances),
            requests={rid: rec.clone() for rid, rec in self.requests.items()},
            seen_tx_ids=set(self.seen_tx_ids),
            height=self.height,
            issued_supply=self.issued_supply,
            genesis_supply=self.genesis_supply,
        )

    def balance(self, address: str) -> int:
        return self.balances.get(address, 0)

    def escrow_total(self) -> int:
        return sum(rec.escrow for rec in self.requests.values())

    def conservation_gap(self) -> int:
        """Zero iff money is conserved: balances + escrows == issued + genesis."""
        return (sum(self.balances.values()) + self.escrow_total()
                - self.issued_supply - self.genesis_supply)

    def to_canonical(self) -> dict:
        return {
            "balances": dict(self.balances),
            "requests": {rid: rec.to_canonical() for rid, rec in self.requests.items()},
            "seen_tx_ids": sorted(self.seen_tx_ids),
            "height": self.height,
            "issued_supply": self.issued_supply,
            "genesis_supply": self.genesis_supply,
        }

    def state_hash(self) -> bytes:
        return hash_canonical(self.to_canonical())


def _sender_address(tx: Transaction) -> str:
    assert tx.sender_public is not None
    return derive_address(tx.sender_public)


def validate_transaction(
    state: LedgerState,
    tx: Transaction,
    block_time: int,
    *,
    coinbase: Optional[tuple[int, int]] = None,
) -> Optional[Violation]:
    """Check ``tx`` against ``state`` at ``block_time``; None means valid.

    ``coinbase`` is (expected_reward, expected_height) and is only passed by
    block-level validation for the transaction at position 0; outside that
    context a Coinbase never validates.
    """
    shape_error = check_shape(tx)
    if shape_error:
        return Violation(MALFORMED, shape_error)
    if tx.id_hex in state.seen_tx_ids:
        return Violation(REPLAYED_TRANSACTION, tx.id_hex)

    if tx.kind == KIND_COINBASE:
        if coinbase is None:
            return Violation(BAD_COINBASE, "coinbase only valid at block position 0")
        reward, height = coinbase
        if tx.payload["amount"] != reward:
            return Violation(BAD_COINBASE, f"reward must be {reward}")
        if tx.payload["height"] != height:
            return Violation(BAD_COINBASE, f"coinbase height must be {height}")
        return None

    if not tx.verify():
        return Violation(BAD_SIGNATURE, "signature does not verify over signing preimage")
    sender = _sender_address(tx)
    p = tx.payload

    if tx.kind == KIND_REQUEST:
        if p["due_date"] <= block_time:
            return Violation(LATE_OFFER, "request due date is not in the future")
        return None

    if tx.kind == KIND_OFFER:
        record = state.requests.get(p["request_id"])
        if record is None:
            return Violation(UNKNOWN_REQUEST, p["request_id"])
        if record.status != STATUS_OPEN:
            return Violation(REQUEST_CLOSED, f"request is {record.status}")
        if p["quoted_price"] > record.max_price:
            return Violation(OVER_BUDGET, f"{p['quoted_price']} > max {record.max_price}")
        if p["promised_due_date"] > record.due_date:
            return Violation(LATE_OFFER, "promised due date after the request due date")
        return None

    if tx.kind == KIND_ACCEPTANCE:
        record = state.requests.get(p["request_id"])
        if record is None:
            return Violation(UNKNOWN_REQUEST, p["request_id"])
        if record.status != STATUS_OPEN:
            return Violation(REQUEST_CLOSED, f"request is {record.status}")
        offer = record.offers.get(p["offer_id"])
        if offer is None:
            return Violation(UNKNOWN_OFFER, p["offer_id"])
        if sender != record.customer:
            return Violation(NOT_CUSTOMER, sender)
        if state.balance(sender) < offer.quoted_price:
            return Violation(
                INSUFFICIENT_FUNDS,
                f"balance {state.balance(sender)} < price {offer.quoted_price}",
            )
        return None

    if tx.kind == KIND_CONFIRMATION:
        record = state.requests.get(p["request_id"])
        if record is None:
            return Violation(UNKNOWN_REQUEST, p["request_id"])
        if record.status != STATUS_ACCEPTED:
            return Violation(REQUEST_CLOSED, f"request is {record.status}, not ACCEPTED")
        if sender != record.customer:
            return Violation(NOT_CUSTOMER, sender)
        return None

    if tx.kind == KIND_TRANSFER:
        if state.balance(sender) < p["amount"]:
            return Violation(
                INSUFFICIENT_FUNDS, f"balance {state.balance(sender)} < {p['amount']}"
            )
        return None

    return Violation(MALFORMED, f"unhandled kind {tx.kind}")  # pragma: no cover


def apply_transaction(
    state: LedgerState,
    tx: Transaction,
    block_time: int,
    *,
    coinbase: Optional[tuple[int, int]] = None,
) -> LedgerState:
    """Apply a validated transaction, mutating ``state`` in place.

    Re-validates first and raises ContractError on failure, so a bad call can
    never leave a partial mutation behind.
    """
    violation = validate_transaction(state, tx, block_time, coinbase=coinbase)
    if violation is not None:
        raise ContractError(violation)

    p = tx.payload
    if tx.kind == KIND_COINBASE:
        state.balances[p["to"]] = state.balance(p["to"]) + p["amount"]
        state.issued_supply += p["amount"]
    elif tx.kind == KIND_REQUEST:
        state.requests[tx.id_hex] = RequestRecord(
            customer=_sender_address(tx),
            product_spec=p["product_spec"],
            process_tag=p["process_tag"],
            due_date=p["due_date"],
            max_price=p["max_price"],
        )
    elif tx.kind == KIND_OFFER:
        record = state.requests[p["request_id"]]
        record.offers[tx.id_hex] = OfferEntry(
            provider=_sender_address(tx),
            quoted_price=p["quoted_price"],
            promised_due_date=p["promised_due_date"],
        )
    elif tx.kind == KIND_ACCEPTANCE:
        record = state.requests[p["request_id"]]
        offer = record.offers[p["offer_id"]]
        customer = record.customer
        state.balances[customer] = state.balance(customer) - offer.quoted_price
        record.escrow = offer.quoted_price
        record.status = STATUS_ACCEPTED
        record.accepted_offer = p["offer_id"]
    elif tx.kind == KIND_CONFIRMATION:
        record = state.requests[p["request_id"]]
        assert record.accepted_offer is not None
        provider = record.offers[record.accepted_offer].provider
        state.balances[provider] = state.balance(provider) + record.escrow
        record.escrow = 0
        record.status = STATUS_FULFILLED
    elif tx.kind == KIND_TRANSFER:
        sender = _sender_address(tx)
        state.balances[sender] = state.balance(sender) - p["amount"]
        state.balances[p["to"]] = state.balance(p["to"]) + p["amount"]

    state.seen_tx_ids.add(tx.id_hex)
    return state


def expire_requests(state: LedgerState, block_time: int) -> LedgerState:
    """Close every OPEN request whose due date passed.  Runs once per block."""
    for record in state.requests.values():
        if record.status == STATUS_OPEN and record.due_date < block_time:
            record.status = STATUS_EXPIRED
    return state


def select_offer(offers: Mapping[str, OfferEntry]) -> str:
    """Default policy: cheapest offer, then earliest promise, then smallest id."""
    if not offers:
        raise NoOffersError("no offers to select from")
    return min(offers, key=lambda oid: (offers[oid].quoted_price,
                                        offers[oid].promised_due_date, oid))


def sorted_offers(record: RequestRecord) -> list[tuple[str, OfferEntry]]:
    """Offers in select_offer preference order (for views and UIs)."""
    return sorted(
        record.offers.items(),
        key=lambda item: (item[1].quoted_price, item[1].promised_due_date, item[0]),
    )


def request_status(state: LedgerState, request_id: str) -> dict[str, Any]:
    """Read-only view of one request; raises UnknownRequestError if absent."""
    record = state.requests.get(request_id)
    if record is None:
        raise UnknownRequestError(request_id)
    return {
        "request_id": request_id,
        "customer": record.customer,
        "product_spec": record.product_spec,
        "process_tag": record.process_tag,
        "due_date": record.due_date,
        "max_price": record.max_price,
        "status": record.status,
        "accepted_offer": record.accepted_offer,
        "escrow": record.escrow,
        "offers": [
            {
                "offer_id": oid,
                "provider": entry.provider,
                "quoted_price": entry.quoted_price,
                "promised_due_date": entry.promised_due_date,
            }
            for oid, entry in sorted_offers(record)
        ],
    }
