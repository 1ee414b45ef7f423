"""Full node state machine: mempool, production, marketplace roles, persistence.

A Node is single-threaded by contract: every entry point (on_message, produce,
submit_transaction, connect) must be called from one logical command stream.
The live runtime funnels p2p frames, API calls, and timers through a command
queue; the simulator steps nodes in virtual-time order.  Time is always passed
in (``now``, unix seconds) so the same machine runs under both clocks.
"""

from __future__ import annotations

import logging
import os
from collections import OrderedDict
from pathlib import Path
from typing import Any, Iterable, Optional

from . import __version__
from .chain import (
    Block,
    Chain,
    GenesisConfig,
    MODE_AUTHORITY,
    MODE_POW,
    UnknownParentError,
    assemble_block,
    mine_pow,
    scheduled_authority,
    seal_authority,
)
from .contract import (
    LedgerState,
    STATUS_OPEN,
    Violation,
    apply_transaction,
    request_status,
    validate_transaction,
)
from .crypto import KeyPair
from .p2p import (
    BLOCKS,
    BLOCK_GOSSIP,
    DedupCache,
    GET_BLOCKS,
    HELLO,
    InboundVerdict,
    NetMessage,
    PEER_LIST,
    PING,
    PONG,
    PeerTable,
    SYNC_BATCH,
    TX_GOSSIP,
    Transport,
    verify_inbound,
)
from .tx import KIND_COINBASE, Transaction, make_offer

log = logging.getLogger("chainfab.node")

ROLE_PROVIDER = "provider"
ROLE_CUSTOMER = "customer"
ROLE_VALIDATOR = "validator"
ROLE_OBSERVER = "observer"
ROLES = (ROLE_PROVIDER, ROLE_CUSTOMER, ROLE_VALIDATOR, ROLE_OBSERVER)

MEMPOOL_FULL = "MempoolFull"

PENALTY_INVALID = 10
PENALTY_SEND_FAILURE = 1


class SubmitRejected(Exception):
    def __init__(self, violation: Violation):
        super().__init__(str(violation))
        self.violation = violation


class CorruptStoreError(Exception):
    """chain.jsonl failed validation during replay; the node refuses to start."""


class Mempool:
    """Pending transactions in arrival order, keyed by tx id."""

    def __init__(self, capacity: int = 10_000):
        self.capacity = capacity
        self.entries: "OrderedDict[str, Transaction]" = OrderedDict()

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, tx_id: str) -> bool:
        return tx_id in self.entries

    def admit(self, tx: Transaction, state: LedgerState, now: int) -> Optional[Violation]:
        if tx.id_hex in self.entries:
            return Violation("ReplayedTransaction", "already pending")
        if len(self.entries) >= self.capacity:
            return Violation(MEMPOOL_FULL, f"capacity {self.capacity}")
        violation = validate_transaction(state, tx, now)
        if violation is not None:
            return violation
        self.entries[tx.id_hex] = tx
        return None

    def remove(self, tx_ids: Iterable[str]) -> None:
        for tx_id in tx_ids:
            self.entries.pop(tx_id, None)

    def refilter(self, state: LedgerState, now: int) -> None:
        """Drop entries that no longer validate against the given tip state."""
        stale = [tx_id for tx_id, tx in self.entries.items()
                 if validate_transaction(state, tx, now) is not None]
        self.remove(stale)

    def transactions(self) -> list[Transaction]:
        return list(self.entries.values())


class ProviderPolicy:
    """Auto-bidding rule: fixed base cost with a per-mille margin and lead time."""

    def __init__(self, capabilities: Iterable[str], base_cost: int,
                 margin: int = 0, lead_time: int = 86_400):
        self.capabilities = tuple(capabilities)
        self.base_cost = int(base_cost)
        self.margin = int(margin)
        self.lead_time = int(lead_time)

    def matches(self, process_tag: str) -> bool:
        return process_tag in self.capabilities

    def quote(self) -> int:
        return self.base_cost * (1000 + self.margin) // 1000

    @classmethod
    def from_dict(cls, obj: dict) -> "ProviderPolicy":
        return cls(
            capabilities=obj.get("capabilities", ()),
            base_cost=obj["base_cost"],
            margin=obj.get("margin", 0),
            lead_time=obj.get("lead_time", 86_400),
        )


class Node:
    """One cloud-manufacturing network participant (any role)."""

    def __init__(
        self,
        *,
        genesis: GenesisConfig,
        keypair: KeyPair,
        transport: Transport,
        role: str = ROLE_OBSERVER,
        policy: Optional[ProviderPolicy] = None,
        data_dir: Optional[str | Path] = None,
        produce_blocks: Optional[bool] = None,
        produce_empty: bool = False,
        max_block_txs: int = 100,
        mine_budget: int = 500_000,
        mempool_capacity: int = 10_000,
        max_peers: int = 32,
    ):
        if role not in ROLES:
            raise ValueError(f"unknown role {role!r}")
        if role == ROLE_VALIDATOR and genesis.consensus.mode == MODE_AUTHORITY:
            if keypair.address not in genesis.consensus.authorities:
                raise ValueError("validator key is not in the genesis authority roster")
        self.genesis = genesis
        self.config = genesis.consensus
        self.network_id = genesis.network_id
        self.keypair = keypair
        self.address = keypair.address
        self.role = role
        self.policy = policy
        self.transport = transport
        if produce_blocks is None:
            produce_blocks = role != ROLE_OBSERVER
        self.produce_blocks = produce_blocks
        self.produce_empty = produce_empty
        self.max_block_txs = max_block_txs
        self.mine_budget = mine_budget

        self.chain = Chain(genesis)
        self.mempool = Mempool(mempool_capacity)
        self.peers = PeerTable(max_peers=max_peers)
        self.dedup = DedupCache()
        self.synced = True  # runtime flips this off while bootstrapping

        # per-endpoint height we last requested blocks from (sync backoff)
        self._sync_from: dict[str, int] = {}
        # requests this provider already quoted (survives reorgs)
        self._offered_requests: set[str] = set()
        self._canonical_txs: dict[str, Transaction] = {}
        self._tip = self.chain.tip_id()

        self.data_dir: Optional[Path] = Path(data_dir) if data_dir else None
        self._journal = None
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            self._replay_journal()
            self._journal = open(self._journal_path(), "ab")
        # everything in the store right now is already on disk (or genesis)
        self._persisted_ids: set[str] = set(self.chain.store.blocks)
        self._refresh_canonical_txs()

    # --- persistence ------------------------------------------------------

    def _journal_path(self) -> Path:
        assert self.data_dir is not None
        return self.data_dir / "chain.jsonl"

    def _replay_journal(self) -> None:
        path = self._journal_path()
        if not path.exists():
            return
        raw = path.read_bytes()
        lines = raw.split(b"\n")
        complete = lines[:-1]  # a missing trailing newline marks a torn write
        kept = b"".join(line + b"\n" for line in complete)
        for lineno, line in enumerate(complete, start=1):
            if not line.strip():
                raise CorruptStoreError(f"blank journal line {lineno}")
            try:
                block = Block.decode(line)
            except Exception as exc:
                raise CorruptStoreError(f"undecodable block at line {lineno}: {exc}") from exc
            try:
                violations = self.chain.adopt(block)
            except UnknownParentError as exc:
                raise CorruptStoreError(f"orphan block at line {lineno}") from exc
            if violations:
                raise CorruptStoreError(
                    f"invalid block at line {lineno}: {violations[0]}")
        if kept != raw:
            path.write_bytes(kept)  # drop the torn tail
        self._tip = self.chain.tip_id()

    def _persist_block(self, block: Block) -> None:
        if self._journal is None:
            return
        self._journal.write(block.encode() + b"\n")
        self._journal.flush()
        os.fsync(self._journal.fileno())

    def close(self) -> None:
        if self._journal is not None:
            self._journal.close()
            self._journal = None

    # --- outbound helpers ---------------------------------------------------

    def _message(self, kind: str, payload: dict) -> NetMessage:
        return NetMessage(kind=kind, payload=payload, sender=self.address,
                          network_id=self.network_id)

    def _cast(self, endpoint: str, msg: NetMessage, peer_id: Optional[str] = None) -> bool:
        ok = self.transport.cast(endpoint, msg.encode())
        if not ok and peer_id is not None:
            self.peers.penalize(peer_id, PENALTY_SEND_FAILURE)
        return ok

    def gossip(self, msg: NetMessage, origin: Optional[str] = None) -> set[str]:
        """Forward to every connected peer except the origin; dedup-suppressed."""
        if self.dedup.seen_or_add(msg.dedup_key()):
            return set()
        forwarded: set[str] = set()
        for info in self.peers.entries():
            if info.node_id == origin:
                continue
            if self._cast(info.endpoint, msg, peer_id=info.node_id):
                forwarded.add(info.node_id)
        return forwarded

    def _hello_message(self, reply: bool) -> NetMessage:
        # ``reply`` asks the peer to answer with its own Hello; answers carry
        # False so introductions terminate after one round trip.
        return self._message(HELLO, {
            "listen": self.transport.local,
            "tip_height": self.chain.height(),
            "version": __version__,
            "reply": reply,
        })

    def connect(self, endpoint: str, now: int) -> None:
        """Initiate a handshake by casting our Hello at the endpoint."""
        self._cast(endpoint, self._hello_message(reply=True))

    # --- inbound dispatch -----------------------------------------------------

    def on_message(self, raw: bytes, now: int) -> None:
        verdict = verify_inbound(raw, self.network_id, self.config)
        if not verdict.accepted:
            self._note_rejection(verdict, now)
            return
        msg = verdict.message
        assert msg is not None
        if msg.sender == self.address:
            return  # our own gossip reflected back
        if self.peers.is_banned(msg.sender):
            return
        handler = {
            HELLO: self._on_hello,
            PEER_LIST: self._on_peer_list,
            TX_GOSSIP: self._on_tx_gossip,
            BLOCK_GOSSIP: self._on_block_gossip,
            GET_BLOCKS: self._on_get_blocks,
            BLOCKS: self._on_blocks,
            PING: self._on_ping,
            PONG: self._on_pong,
        }[msg.kind]
        handler(verdict, now)

    def _note_rejection(self, verdict: InboundVerdict, now: int) -> None:
        msg = verdict.message
        if msg is not None and msg.sender in self.peers:
            self.peers.penalize(msg.sender, PENALTY_INVALID)
        log.debug("rejected inbound: %s", verdict.reason)

    def _on_hello(self, verdict: InboundVerdict, now: int) -> None:
        msg = verdict.message
        listen = msg.payload["listen"]
        known = msg.sender in self.peers
        if not self.peers.upsert(msg.sender, listen, now):
            return
        if msg.payload["reply"]:
            self._cast(listen, self._hello_message(reply=False), peer_id=msg.sender)
        if not known:
            entries = [{"node_id": i.node_id, "endpoint": i.endpoint}
                       for i in self.peers.entries() if i.node_id != msg.sender]
            if entries:
                self._cast(listen, self._message(PEER_LIST, {"peers": entries}),
                           peer_id=msg.sender)
        if msg.payload["tip_height"] > self.chain.height():
            self._request_blocks(listen, self.chain.height() + 1, msg.sender)
        else:
            self.synced = True

    def _on_peer_list(self, verdict: InboundVerdict, now: int) -> None:
        for entry in verdict.message.payload["peers"]:
            node_id, endpoint = entry["node_id"], entry["endpoint"]
            if node_id == self.address or node_id in self.peers:
                continue
            if self.peers.is_banned(node_id) or len(self.peers) >= self.peers.max_peers:
                continue
            self.connect(endpoint, now)

    def _on_tx_gossip(self, verdict: InboundVerdict, now: int) -> None:
        msg, tx = verdict.message, verdict.transaction
        if self.dedup.seen_or_add(msg.dedup_key()):
            return
        self.peers.touch(msg.sender, now)
        violation = self.mempool.admit(tx, self.chain.tip_state(), now)
        if violation is not None:
            # stateful rejections (replays, funds) are not peer misbehavior
            log.debug("tx %s not admitted: %s", tx.id_hex[:12], violation)
            return
        relay = self._message(TX_GOSSIP, {"tx": tx.to_wire()})
        self._forward(relay, origin=msg.sender)

    def _forward(self, msg: NetMessage, origin: Optional[str]) -> set[str]:
        # origin-aware forward that bypasses the dedup gate (already recorded)
        forwarded: set[str] = set()
        for info in self.peers.entries():
            if info.node_id == origin:
                continue
            if self._cast(info.endpoint, msg, peer_id=info.node_id):
                forwarded.add(info.node_id)
        return forwarded

    def _on_block_gossip(self, verdict: InboundVerdict, now: int) -> None:
        msg, block = verdict.message, verdict.block
        if self.dedup.seen_or_add(msg.dedup_key()):
            return
        self.peers.touch(msg.sender, now)
        if block.id_hex in self.chain.store:
            return
        parent_known = block.header.prev_hash.hex() in self.chain.store
        if not parent_known:
            endpoint = self.peers.endpoint_of(msg.sender)
            if endpoint:
                self._request_blocks(endpoint, self.chain.height() + 1, msg.sender)
            return
        violations = self.chain.adopt(block)
        if violations:
            self.peers.penalize(msg.sender, PENALTY_INVALID)
            log.debug("invalid gossiped block: %s", violations[0])
            return
        relay = self._message(BLOCK_GOSSIP, {"block": block.to_wire()})
        self._forward(relay, origin=msg.sender)
        self._after_chain_update(now)

    def _on_get_blocks(self, verdict: InboundVerdict, now: int) -> None:
        msg = verdict.message
        endpoint = self.peers.endpoint_of(msg.sender)
        if endpoint is None:
            return  # sync requires a prior handshake
        from_height = max(1, msg.payload["from_height"])
        chain_ids = self.chain.canonical_chain()
        batch = chain_ids[from_height:from_height + SYNC_BATCH]
        payload = {
            "blocks": [self.chain.store.get(bid).to_wire() for bid in batch],
            "tip_height": self.chain.height(),
        }
        self._cast(endpoint, self._message(BLOCKS, payload), peer_id=msg.sender)

    def _on_blocks(self, verdict: InboundVerdict, now: int) -> None:
        msg = verdict.message
        self.peers.touch(msg.sender, now)
        endpoint = self.peers.endpoint_of(msg.sender)
        adopted = 0
        failed = False
        for block in verdict.blocks:
            if block.id_hex in self.chain.store:
                continue
            try:
                violations = self.chain.adopt(block)
            except UnknownParentError:
                failed = True
                break
            if violations:
                self.peers.penalize(msg.sender, PENALTY_INVALID)
                self._sync_from.pop(endpoint or "", None)
                log.debug("invalid block from peer %s: %s", msg.sender, violations[0])
                return
            adopted += 1
        if adopted:
            self._after_chain_update(now)
        if endpoint is None:
            return
        if failed:
            # our chains diverge below from_height: back off toward genesis
            prev = self._sync_from.get(endpoint, self.chain.height() + 1)
            lower = max(1, prev - SYNC_BATCH)
            if lower < prev:
                self._request_blocks(endpoint, lower, msg.sender)
            else:
                self.peers.penalize(msg.sender, PENALTY_INVALID)
                self._sync_from.pop(endpoint, None)
            return
        if msg.payload["tip_height"] > self.chain.height() and adopted:
            self._request_blocks(endpoint, self.chain.height() + 1, msg.sender)
        else:
            self._sync_from.pop(endpoint, None)
            self.synced = True

    def _request_blocks(self, endpoint: str, from_height: int, peer_id: str) -> None:
        self._sync_from[endpoint] = from_height
        self._cast(endpoint, self._message(GET_BLOCKS, {"from_height": from_height}),
                   peer_id=peer_id)

    def _on_ping(self, verdict: InboundVerdict, now: int) -> None:
        msg = verdict.message
        self.peers.touch(msg.sender, now)
        endpoint = self.peers.endpoint_of(msg.sender)
        if endpoint:
            nonce = msg.payload.get("nonce", 0)
            self._cast(endpoint, self._message(PONG, {"nonce": nonce}), peer_id=msg.sender)

    def _on_pong(self, verdict: InboundVerdict, now: int) -> None:
        self.peers.touch(verdict.message.sender, now)

    # --- local operations ------------------------------------------------------

    def submit_transaction(self, tx: Transaction, now: int) -> str:
        """Admit a locally submitted transaction and gossip it; returns the tx id."""
        violation = self.mempool.admit(tx, self.chain.tip_state(), now)
        if violation is not None:
            raise SubmitRejected(violation)
        self.gossip(self._message(TX_GOSSIP, {"tx": tx.to_wire()}))
        return tx.id_hex

    def produce(self, now: int) -> Optional[Block]:
        """One production trigger: drain, assemble, mine or seal, adopt, gossip."""
        if not self.produce_blocks:
            return None
        tip = self.chain.tip_block()
        next_height = tip.header.height + 1
        if self.config.mode == MODE_AUTHORITY:
            if scheduled_authority(self.config, next_height) != self.address:
                return None

        timestamp = max(now, tip.header.timestamp + 1)
        trial = self.chain.tip_state().clone()
        chosen: list[Transaction] = []
        for tx in self.mempool.transactions():
            if len(chosen) >= self.max_block_txs:
                break
            if validate_transaction(trial, tx, timestamp) is None:
                apply_transaction(trial, tx, timestamp)
                chosen.append(tx)
        if not chosen and not self.produce_empty:
            return None

        block = assemble_block(tip.header, chosen, self.address, now,
                               self.config, self.chain.tip_state())
        if self.config.mode == MODE_POW:
            mined = mine_pow(block, self.mine_budget)
            if mined is None:
                log.debug("mining budget exhausted at height %d", next_height)
                return None
            block = mined
        else:
            block = seal_authority(block, self.keypair, self.config)

        violations = self.chain.adopt(block)
        assert not violations, f"self-produced block invalid: {violations}"
        self.gossip(self._message(BLOCK_GOSSIP, {"block": block.to_wire()}))
        self._after_chain_update(now)
        return block

    # --- chain update reactions -------------------------------------------------

    def _refresh_canonical_txs(self) -> None:
        txs: dict[str, Transaction] = {}
        for bid in self.chain.canonical_chain():
            for tx in self.chain.store.get(bid).transactions:
                txs[tx.id_hex] = tx
        self._canonical_txs = txs

    def _after_chain_update(self, now: int) -> None:
        """Persist new blocks and react to a possible tip change."""
        # persist every newly adopted block in adoption order
        new_tip = self.chain.tip_id()
        if new_tip == self._tip:
            self._persist_missing()
            return
        old_txs = self._canonical_txs
        self._persist_missing()
        self._tip = new_tip
        self._refresh_canonical_txs()
        tip_state = self.chain.tip_state()
        # transactions orphaned by a reorg go back to the pool
        for tx_id, tx in old_txs.items():
            if tx_id not in self._canonical_txs and tx.kind != KIND_COINBASE:
                self.mempool.admit(tx, tip_state, now)
        self.mempool.refilter(tip_state, now)
        self._autobid(now)

    def _persist_missing(self) -> None:
        if self._journal is None:
            return
        # journal in adoption order: store.blocks preserves insertion order
        for bid, block in self.chain.store.blocks.items():
            if bid in self._persisted_ids:
                continue
            self._persist_block(block)
            self._persisted_ids.add(bid)

    def _autobid(self, now: int) -> None:
        """Quote every new OPEN request this provider can serve and afford."""
        if self.role != ROLE_PROVIDER or self.policy is None:
            return
        state = self.chain.tip_state()
        for request_id, record in state.requests.items():
            if record.status != STATUS_OPEN or request_id in self._offered_requests:
                continue
            if not self.policy.matches(record.process_tag):
                continue
            price = self.policy.quote()
            promised = now + self.policy.lead_time
            if price > record.max_price or promised > record.due_date:
                self._offered_requests.add(request_id)  # permanently out of reach
                continue
            offer = make_offer(self.keypair, request_id, price, promised)
            self._offered_requests.add(request_id)
            try:
                self.submit_transaction(offer, now)
            except SubmitRejected as exc:
                log.debug("autobid rejected: %s", exc)

    # --- views -------------------------------------------------------------------

    def status(self) -> dict[str, Any]:
        return {
            "network_id": self.network_id,
            "node_id": self.address,
            "role": self.role,
            "height": self.chain.height(),
            "tip": self.chain.tip_id(),
            "peers": len(self.peers),
            "mempool": len(self.mempool),
            "synced": self.synced,
            "version": __version__,
        }

    def tx_lookup(self, tx_id: str) -> Optional[dict[str, Any]]:
        index = self.chain.canonical_tx_index()
        if tx_id in index:
            bid, height = index[tx_id]
            confirmations = self.chain.height() - height + 1
            return {
                "tx": self._canonical_txs[tx_id].to_wire(),
                "tx_id": tx_id,
                "status": "confirmed",
                "block_id": bid,
                "height": height,
                "confirmations": confirmations,
            }
        if tx_id in self.mempool:
            return {
                "tx": self.mempool.entries[tx_id].to_wire(),
                "tx_id": tx_id,
                "status": "pending",
            }
        return None

    def request_view(self, request_id: str) -> dict[str, Any]:
        return request_status(self.chain.tip_state(), request_id)

    def list_requests(self, status: Optional[str] = None) -> list[dict[str, Any]]:
        state = self.chain.tip_state()
        views = [request_status(state, rid) for rid in state.requests]
        if status:
            views = [v for v in views if v["status"] == status]
        return views
