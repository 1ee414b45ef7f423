"""Wire envelope, peer table, gossip dedup, and inbound message verification.

All node-to-node traffic is one-way casts of canonical-JSON NetMessage frames
(docs/wire.md); anything that looks like a reply is just another cast to the
peer's advertised endpoint.  That keeps the node state machine identical under
the real TCP transport and the virtual-time simulator.
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Optional, Protocol

from .chain import Block, ConsensusConfig, MODE_POW, MalformedBlock, \
    meets_pow_target, scheduled_authority
from .crypto import canonical_encode, derive_address, hash_canonical, is_address, \
    verify_signature
from .tx import KIND_COINBASE, MalformedTransaction, Transaction

HELLO = "Hello"
PEER_LIST = "PeerList"
TX_GOSSIP = "TxGossip"
BLOCK_GOSSIP = "BlockGossip"
GET_BLOCKS = "GetBlocks"
BLOCKS = "Blocks"
PING = "Ping"
PONG = "Pong"

MSG_KINDS = (HELLO, PEER_LIST, TX_GOSSIP, BLOCK_GOSSIP, GET_BLOCKS, BLOCKS, PING, PONG)

SYNC_BATCH = 100
DEDUP_CAPACITY = 10_000
MAX_FRAME = 16 * 1024 * 1024

# verify_inbound reject reasons (transaction/block reasons carry through).
MALFORMED_MESSAGE = "MalformedMessage"
NETWORK_MISMATCH = "NetworkMismatch"
BAD_POW = "BadPoW"
BAD_AUTHORITY = "BadAuthority"
BAD_SIGNATURE = "BadSignature"
BAD_COINBASE = "BadCoinbase"


class Transport(Protocol):
    """Message-oriented transport: fire-and-forget delivery of one frame."""

    @property
    def local(self) -> str: ...

    def cast(self, endpoint: str, data: bytes) -> bool: ...


@dataclass(frozen=True)
class NetMessage:
    kind: str
    payload: dict
    sender: str  # node id (address) of the sending node
    network_id: str

    def to_wire(self) -> dict:
        return {
            "kind": self.kind,
            "payload": dict(self.payload),
            "sender": self.sender,
            "network_id": self.network_id,
        }

    def encode(self) -> bytes:
        return canonical_encode(self.to_wire())

    def dedup_key(self) -> bytes:
        """Payload identity: the message minus who relayed it."""
        wire = self.to_wire()
        del wire["sender"]
        return hash_canonical(wire)

    @classmethod
    def from_wire(cls, obj: Any) -> "NetMessage":
        if not isinstance(obj, dict) or set(obj) != {"kind", "payload", "sender", "network_id"}:
            raise ValueError("message must have exactly kind, payload, sender, network_id")
        if obj["kind"] not in MSG_KINDS:
            raise ValueError(f"unknown message kind {obj['kind']!r}")
        if not isinstance(obj["payload"], dict):
            raise ValueError("payload must be an object")
        if not is_address(obj["sender"]):
            raise ValueError("sender must be a node id")
        if not isinstance(obj["network_id"], str):
            raise ValueError("network_id must be a string")
        return cls(obj["kind"], obj["payload"], obj["sender"], obj["network_id"])

    @classmethod
    def decode(cls, data: bytes) -> "NetMessage":
        return cls.from_wire(json.loads(data.decode("utf-8")))


@dataclass
class PeerInfo:
    node_id: str
    endpoint: str
    last_seen: int
    score: int


class PeerTable:
    """Known peers with scores; banned ids never re-enter (start 100, ban at 0)."""

    def __init__(self, max_peers: int = 32, initial_score: int = 100):
        self.max_peers = max_peers
        self.initial_score = initial_score
        self.peers: dict[str, PeerInfo] = {}
        self.banned: set[str] = set()

    def __len__(self) -> int:
        return len(self.peers)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.peers

    def is_banned(self, node_id: str) -> bool:
        return node_id in self.banned

    def upsert(self, node_id: str, endpoint: str, now: int) -> bool:
        """Add or refresh a peer; False when banned or the table is full."""
        if node_id in self.banned:
            return False
        info = self.peers.get(node_id)
        if info is not None:
            info.endpoint = endpoint
            info.last_seen = now
            return True
        if len(self.peers) >= self.max_peers:
            return False
        self.peers[node_id] = PeerInfo(node_id, endpoint, now, self.initial_score)
        return True

    def get(self, node_id: str) -> Optional[PeerInfo]:
        return self.peers.get(node_id)

    def endpoint_of(self, node_id: str) -> Optional[str]:
        info = self.peers.get(node_id)
        return info.endpoint if info else None

    def touch(self, node_id: str, now: int) -> None:
        info = self.peers.get(node_id)
        if info is not None:
            info.last_seen = now

    def penalize(self, node_id: str, amount: int) -> bool:
        """Lower a peer's score; returns True when the peer got banned."""
        info = self.peers.get(node_id)
        if info is None:
            return False
        info.score -= amount
        if info.score <= 0:
            del self.peers[node_id]
            self.banned.add(node_id)
            return True
        return False

    def entries(self) -> list[PeerInfo]:
        return list(self.peers.values())  # insertion order: deterministic


class DedupCache:
    """FIFO set of recently seen payload hashes (gossip echo suppression)."""

    def __init__(self, capacity: int = DEDUP_CAPACITY):
        self.capacity = capacity
        self._entries: OrderedDict[bytes, None] = OrderedDict()

    def seen_or_add(self, key: bytes) -> bool:
        """True if the key was already present; records it either way."""
        if key in self._entries:
            return True
        self._entries[key] = None
        if len(self._entries) > self.capacity:
            self._entries.popitem(last=False)
        return False

    def __contains__(self, key: bytes) -> bool:
        return key in self._entries

    def __len__(self) -> int:
        return len(self._entries)


@dataclass(frozen=True)
class InboundVerdict:
    accepted: bool
    reason: str = ""
    message: Optional[NetMessage] = None
    transaction: Optional[Transaction] = None
    block: Optional[Block] = None
    blocks: tuple[Block, ...] = ()


def _reject(reason: str) -> InboundVerdict:
    return InboundVerdict(False, reason)


def verify_inbound(raw: bytes, network_id: str,
                   consensus: ConsensusConfig) -> InboundVerdict:
    """Gate every inbound frame: structure, network, signatures, PoW/authority.

    Rejected frames are never forwarded; contextual chain checks (linkage,
    balances) happen later at adoption time.
    """
    if len(raw) > MAX_FRAME:
        return _reject(MALFORMED_MESSAGE)
    try:
        msg = NetMessage.decode(raw)
    except Exception:
        return _reject(MALFORMED_MESSAGE)
    if msg.network_id != network_id:
        return InboundVerdict(False, NETWORK_MISMATCH, message=msg)

    p = msg.payload
    if msg.kind == HELLO:
        if not (isinstance(p.get("listen"), str)
                and isinstance(p.get("tip_height"), int)
                and p["tip_height"] >= 0
                and isinstance(p.get("version"), str)
                and isinstance(p.get("reply"), bool)):
            return _reject(MALFORMED_MESSAGE)
        return InboundVerdict(True, message=msg)

    if msg.kind == PEER_LIST:
        entries = p.get("peers")
        if not isinstance(entries, list) or len(entries) > 2 * 32:
            return _reject(MALFORMED_MESSAGE)
        for entry in entries:
            if not (isinstance(entry, dict) and is_address(entry.get("node_id", ""))
                    and isinstance(entry.get("endpoint"), str)):
                return _reject(MALFORMED_MESSAGE)
        return InboundVerdict(True, message=msg)

    if msg.kind == TX_GOSSIP:
        try:
            tx = Transaction.from_wire(p.get("tx"))
        except MalformedTransaction:
            return _reject(MALFORMED_MESSAGE)
        if tx.kind == KIND_COINBASE:
            return InboundVerdict(False, BAD_COINBASE, message=msg)
        if not tx.verify():
            return InboundVerdict(False, BAD_SIGNATURE, message=msg)
        return InboundVerdict(True, message=msg, transaction=tx)

    if msg.kind == BLOCK_GOSSIP:
        try:
            block = Block.from_wire(p.get("block"))
        except MalformedBlock:
            return _reject(MALFORMED_MESSAGE)
        reason = _check_block_seal(block, consensus)
        if reason:
            return InboundVerdict(False, reason, message=msg)
        return InboundVerdict(True, message=msg, block=block)

    if msg.kind == GET_BLOCKS:
        if not (isinstance(p.get("from_height"), int) and p["from_height"] >= 0):
            return _reject(MALFORMED_MESSAGE)
        return InboundVerdict(True, message=msg)

    if msg.kind == BLOCKS:
        raw_blocks = p.get("blocks")
        if not (isinstance(raw_blocks, list) and len(raw_blocks) <= SYNC_BATCH
                and isinstance(p.get("tip_height"), int)):
            return _reject(MALFORMED_MESSAGE)
        blocks = []
        for obj in raw_blocks:
            try:
                block = Block.from_wire(obj)
            except MalformedBlock:
                return _reject(MALFORMED_MESSAGE)
            reason = _check_block_seal(block, consensus)
            if reason:
                return InboundVerdict(False, reason, message=msg)
            blocks.append(block)
        return InboundVerdict(True, message=msg, blocks=tuple(blocks))

    # Ping / Pong carry an optional integer nonce
    nonce = p.get("nonce", 0)
    if not isinstance(nonce, int):
        return _reject(MALFORMED_MESSAGE)
    return InboundVerdict(True, message=msg)


def _check_block_seal(block: Block, consensus: ConsensusConfig) -> str:
    """Context-free consensus seal check (target or authority signature)."""
    header = block.header
    if consensus.mode == MODE_POW:
        if header.pow_zero_bits != consensus.pow_zero_bits:
            return BAD_POW
        if not meets_pow_target(block.block_id, consensus.pow_zero_bits):
            return BAD_POW
        return ""
    if header.pow_zero_bits != 0:
        return BAD_AUTHORITY
    if block.authority_public is None or block.authority_signature is None:
        return BAD_AUTHORITY
    if derive_address(block.authority_public) != scheduled_authority(consensus, header.height):
        return BAD_AUTHORITY
    if not verify_signature(block.authority_public, header.signing_bytes(),
                            block.authority_signature):
        return BAD_AUTHORITY
    return ""


def frame(data: bytes) -> bytes:
    """4-byte big-endian length prefix framing for stream transports."""
    return len(data).to_bytes(4, "big") + data
