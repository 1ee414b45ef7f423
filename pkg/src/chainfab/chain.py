"""Block encapsulation, proof-of-work, validation, fork choice, and the block store.

Two consensus modes: PoW (leading-zero-bits target over the header hash) and
round-robin authority for consortium deployments (the scheduled signer at
height h is authorities[h mod n]).  Cumulative work is 2^pow_zero_bits per
block, so fixed-difficulty PoW degenerates to longest chain and authority
blocks (difficulty 0) count one unit each.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Optional

from .contract import (
    LedgerState,
    Violation,
    apply_transaction,
    expire_requests,
    validate_transaction,
)
from .crypto import (
    KeyPair,
    PUBLIC_KEY_SIZE,
    SIGNATURE_SIZE,
    ZERO_ADDRESS,
    ZERO_DIGEST,
    canonical_encode,
    derive_address,
    hash_bytes,
    is_address,
    merkle_root,
    sign,
    verify_signature,
)
from .tx import KIND_COINBASE, MalformedTransaction, Transaction, make_coinbase

MODE_POW = "pow"
MODE_AUTHORITY = "authority"

# Block-level violation codes (transaction-level codes live in contract.py).
BAD_LINK = "BadLink"
BAD_HEIGHT = "BadHeight"
BAD_TIMESTAMP = "BadTimestamp"
BAD_POW = "BadPoW"
BAD_AUTHORITY = "BadAuthority"
BAD_MERKLE = "BadMerkle"
BAD_COINBASE = "BadCoinbase"
INVALID_TRANSACTION = "InvalidTransaction"


class MalformedBlock(ValueError):
    """Wire object is not a structurally valid block."""


class NotYourTurnError(Exception):
    """Signer is not the scheduled authority for this height."""


class UnknownParentError(KeyError):
    """Block's parent is not in the store."""


@dataclass(frozen=True)
class BlockHeader:
    height: int
    prev_hash: bytes
    merkle_root: bytes
    timestamp: int
    nonce: int
    pow_zero_bits: int
    miner: str

    def to_wire(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash.hex(),
            "merkle_root": self.merkle_root.hex(),
            "timestamp": self.timestamp,
            "nonce": self.nonce,
            "pow_zero_bits": self.pow_zero_bits,
            "miner": self.miner,
        }

    def signing_bytes(self) -> bytes:
        return canonical_encode(self.to_wire())

    @property
    def block_id(self) -> bytes:
        return hash_bytes(self.signing_bytes())

    @classmethod
    def from_wire(cls, obj: Any) -> "BlockHeader":
        if not isinstance(obj, dict):
            raise MalformedBlock("header must be an object")
        try:
            header = cls(
                height=int(obj["height"]),
                prev_hash=bytes.fromhex(obj["prev_hash"]),
                merkle_root=bytes.fromhex(obj["merkle_root"]),
                timestamp=int(obj["timestamp"]),
                nonce=int(obj["nonce"]),
                pow_zero_bits=int(obj["pow_zero_bits"]),
                miner=obj["miner"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedBlock(f"bad header: {exc}") from exc
        if len(header.prev_hash) != 32 or len(header.merkle_root) != 32:
            raise MalformedBlock("prev_hash and merkle_root must be 32 bytes")
        if not is_address(header.miner):
            raise MalformedBlock("miner must be a cm1 address")
        if header.height < 0 or header.nonce < 0 or header.pow_zero_bits < 0:
            raise MalformedBlock("height, nonce, pow_zero_bits must be non-negative")
        return header


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[Transaction, ...]
    # Round-robin mode replaces PoW with an authority signature over the header.
    authority_public: Optional[bytes] = None
    authority_signature: Optional[bytes] = None

    @property
    def block_id(self) -> bytes:
        return self.header.block_id

    @property
    def id_hex(self) -> str:
        return self.header.block_id.hex()

    def to_wire(self) -> dict:
        wire: dict[str, Any] = {
            "header": self.header.to_wire(),
            "transactions": [tx.to_wire() for tx in self.transactions],
        }
        if self.authority_public is not None and self.authority_signature is not None:
            wire["authority"] = {
                "public": self.authority_public.hex(),
                "signature": self.authority_signature.hex(),
            }
        return wire

    def encode(self) -> bytes:
        return canonical_encode(self.to_wire())

    @classmethod
    def from_wire(cls, obj: Any) -> "Block":
        if not isinstance(obj, dict):
            raise MalformedBlock("block must be an object")
        unknown = set(obj) - {"header", "transactions", "authority"}
        if unknown:
            raise MalformedBlock(f"unknown block fields: {sorted(unknown)}")
        header = BlockHeader.from_wire(obj.get("header"))
        raw_txs = obj.get("transactions")
        if not isinstance(raw_txs, list):
            raise MalformedBlock("transactions must be a list")
        try:
            txs = tuple(Transaction.from_wire(t) for t in raw_txs)
        except MalformedTransaction as exc:
            raise MalformedBlock(f"bad transaction: {exc}") from exc
        authority_public = authority_signature = None
        if "authority" in obj:
            auth = obj["authority"]
            if (not isinstance(auth, dict) or set(auth) != {"public", "signature"}):
                raise MalformedBlock("authority must be {public, signature}")
            try:
                authority_public = bytes.fromhex(auth["public"])
                authority_signature = bytes.fromhex(auth["signature"])
            except (TypeError, ValueError) as exc:
                raise MalformedBlock("authority fields must be hex") from exc
            if len(authority_public) != PUBLIC_KEY_SIZE or len(authority_signature) != SIGNATURE_SIZE:
                raise MalformedBlock("authority key/signature sizes are wrong")
        return cls(header, txs, authority_public, authority_signature)

    @classmethod
    def decode(cls, data: bytes) -> "Block":
        try:
            obj = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedBlock("block is not valid JSON") from exc
        return cls.from_wire(obj)


@dataclass
class ConsensusConfig:
    mode: str = MODE_POW
    pow_zero_bits: int = 8
    authorities: tuple[str, ...] = ()
    block_reward: int = 50
    finality_depth: int = 6

    def validate(self) -> None:
        if self.mode not in (MODE_POW, MODE_AUTHORITY):
            raise ValueError(f"unknown consensus mode {self.mode!r}")
        if self.mode == MODE_POW and self.pow_zero_bits < 1:
            raise ValueError("PoW mode requires pow_zero_bits >= 1")
        if self.mode == MODE_AUTHORITY and not self.authorities:
            raise ValueError("authority mode requires a non-empty roster")
        if self.block_reward < 0 or self.finality_depth < 0:
            raise ValueError("block_reward and finality_depth must be non-negative")

    @classmethod
    def from_dict(cls, obj: dict) -> "ConsensusConfig":
        cfg = cls(
            mode=obj.get("mode", MODE_POW),
            pow_zero_bits=int(obj.get("pow_zero_bits", 8)),
            authorities=tuple(obj.get("authorities", ())),
            block_reward=int(obj.get("block_reward", 50)),
            finality_depth=int(obj.get("finality_depth", 6)),
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "pow_zero_bits": self.pow_zero_bits,
            "authorities": list(self.authorities),
            "block_reward": self.block_reward,
            "finality_depth": self.finality_depth,
        }


@dataclass
class GenesisConfig:
    """The shared file that defines one network: consensus rules plus allocations."""

    network_id: str
    timestamp: int
    consensus: ConsensusConfig
    allocations: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, obj: dict) -> "GenesisConfig":
        if not isinstance(obj, dict) or "network_id" not in obj:
            raise ValueError("genesis must be an object with a network_id")
        allocations = obj.get("allocations", {})
        for addr, amount in allocations.items():
            if not is_address(addr):
                raise ValueError(f"genesis allocation to a non-address: {addr}")
            if not isinstance(amount, int) or amount < 0:
                raise ValueError(f"genesis allocation must be a non-negative integer: {addr}")
        return cls(
            network_id=obj["network_id"],
            timestamp=int(obj.get("timestamp", 0)),
            consensus=ConsensusConfig.from_dict(obj.get("consensus", {})),
            allocations=dict(allocations),
        )

    def to_dict(self) -> dict:
        return {
            "network_id": self.network_id,
            "timestamp": self.timestamp,
            "consensus": self.consensus.to_dict(),
            "allocations": dict(self.allocations),
        }

    @classmethod
    def load(cls, path: str | Path) -> "GenesisConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def genesis_block(genesis: GenesisConfig) -> Block:
    """Deterministic height-0 block; allocations live in the config, not in txs.

    The merkle slot commits to the whole genesis config, so two networks with
    different rules or allocations can never share a block id.
    """
    header = BlockHeader(
        height=0,
        prev_hash=ZERO_DIGEST,
        merkle_root=hash_bytes(canonical_encode(genesis.to_dict())),
        timestamp=genesis.timestamp,
        nonce=0,
        pow_zero_bits=0,
        miner=ZERO_ADDRESS,
    )
    return Block(header=header, transactions=())


def coinbase_reward(height: int, cfg: ConsensusConfig) -> int:
    """Constant reward per block; genesis (height 0) mints nothing."""
    if height < 1:
        raise ValueError("coinbase reward applies from height 1")
    return cfg.block_reward


def leading_zero_bits(digest: bytes) -> int:
    bits = 0
    for byte in digest:
        if byte == 0:
            bits += 8
            continue
        for shift in range(7, -1, -1):
            if byte >> shift:
                return bits + (7 - shift)
        return bits  # pragma: no cover
    return bits


def meets_pow_target(block_id: bytes, zero_bits: int) -> bool:
    return leading_zero_bits(block_id) >= zero_bits


def scheduled_authority(cfg: ConsensusConfig, height: int) -> str:
    return cfg.authorities[height % len(cfg.authorities)]


class InvalidTransactionError(ValueError):
    def __init__(self, index: int, violation: Violation):
        super().__init__(f"transaction {index}: {violation}")
        self.index = index
        self.violation = violation


def assemble_block(
    parent: BlockHeader,
    txs: Iterable[Transaction],
    miner: str,
    now: int,
    cfg: ConsensusConfig,
    state_at_parent: LedgerState,
) -> Block:
    """Build an unmined block on ``parent``: coinbase first, then ``txs`` in order.

    Raises InvalidTransactionError if any transaction fails validation under
    sequential application at the block's timestamp.
    """
    height = parent.height + 1
    timestamp = max(now, parent.timestamp + 1)
    all_txs: list[Transaction] = [make_coinbase(miner, coinbase_reward(height, cfg), height)]
    all_txs.extend(txs)

    trial = state_at_parent.clone()
    for index, tx in enumerate(all_txs):
        ctx = (cfg.block_reward, height) if index == 0 else None
        violation = validate_transaction(trial, tx, timestamp, coinbase=ctx)
        if violation is not None:
            raise InvalidTransactionError(index, violation)
        apply_transaction(trial, tx, timestamp, coinbase=ctx)

    header = BlockHeader(
        height=height,
        prev_hash=parent.block_id,
        merkle_root=merkle_root([tx.tx_id for tx in all_txs]),
        timestamp=timestamp,
        nonce=0,
        pow_zero_bits=cfg.pow_zero_bits if cfg.mode == MODE_POW else 0,
        miner=miner,
    )
    return Block(header=header, transactions=tuple(all_txs))


def mine_pow(block: Block, max_iterations: int) -> Optional[Block]:
    """Deterministic nonce search from 0; None when the budget runs out."""
    target = block.header.pow_zero_bits
    for nonce in range(max_iterations):
        header = replace(block.header, nonce=nonce)
        if meets_pow_target(header.block_id, target):
            return Block(header, block.transactions,
                         block.authority_public, block.authority_signature)
    return None


def seal_authority(block: Block, keypair: KeyPair, cfg: ConsensusConfig) -> Block:
    """Attach the scheduled authority's signature over the header (nonce stays 0)."""
    address = derive_address(keypair.public)
    scheduled = scheduled_authority(cfg, block.header.height)
    if address != scheduled:
        raise NotYourTurnError(
            f"height {block.header.height} belongs to {scheduled}, not {address}"
        )
    signature = sign(keypair.secret, block.header.signing_bytes())
    return Block(block.header, block.transactions, keypair.public, signature)


def validate_block(
    block: Block,
    parent: Block,
    state_at_parent: LedgerState,
    cfg: ConsensusConfig,
) -> list[Violation]:
    """All violations found, in check order; empty list means the block is valid."""
    violations: list[Violation] = []
    header = block.header

    if header.prev_hash != parent.block_id:
        violations.append(Violation(BAD_LINK, "prev_hash does not match parent id"))
    if header.height != parent.header.height + 1:
        violations.append(Violation(
            BAD_HEIGHT, f"height {header.height} after parent {parent.header.height}"))
    if header.timestamp <= parent.header.timestamp:
        violations.append(Violation(
            BAD_TIMESTAMP, "timestamp not strictly greater than parent's"))

    if cfg.mode == MODE_POW:
        if header.pow_zero_bits != cfg.pow_zero_bits:
            violations.append(Violation(
                BAD_POW, f"declared difficulty {header.pow_zero_bits} != {cfg.pow_zero_bits}"))
        elif not meets_pow_target(block.block_id, cfg.pow_zero_bits):
            violations.append(Violation(BAD_POW, "block id misses the difficulty target"))
    else:
        violations.extend(_check_authority(block, cfg))

    if header.merkle_root != merkle_root([tx.tx_id for tx in block.transactions]):
        violations.append(Violation(BAD_MERKLE, "merkle root does not match transactions"))

    violations.extend(_check_coinbase_layout(block, cfg))

    trial = state_at_parent.clone()
    for index, tx in enumerate(block.transactions):
        ctx = (cfg.block_reward, header.height) if index == 0 else None
        violation = validate_transaction(trial, tx, header.timestamp, coinbase=ctx)
        if violation is not None:
            violations.append(Violation(
                INVALID_TRANSACTION, f"index {index}: {violation}"))
            break
        apply_transaction(trial, tx, header.timestamp, coinbase=ctx)
    return violations


def _check_authority(block: Block, cfg: ConsensusConfig) -> list[Violation]:
    header = block.header
    out: list[Violation] = []
    if header.pow_zero_bits != 0:
        out.append(Violation(BAD_AUTHORITY, "authority blocks declare difficulty 0"))
    if block.authority_public is None or block.authority_signature is None:
        out.append(Violation(BAD_AUTHORITY, "missing authority signature"))
        return out
    signer = derive_address(block.authority_public)
    scheduled = scheduled_authority(cfg, header.height)
    if signer != scheduled:
        out.append(Violation(BAD_AUTHORITY, f"signer {signer} is not scheduled {scheduled}"))
    elif not verify_signature(block.authority_public, header.signing_bytes(),
                              block.authority_signature):
        out.append(Violation(BAD_AUTHORITY, "authority signature does not verify"))
    return out


def _check_coinbase_layout(block: Block, cfg: ConsensusConfig) -> list[Violation]:
    txs = block.transactions
    out: list[Violation] = []
    if not txs or txs[0].kind != KIND_COINBASE:
        out.append(Violation(BAD_COINBASE, "first transaction must be the coinbase"))
    else:
        p = txs[0].payload
        if p["amount"] != cfg.block_reward:
            out.append(Violation(
                BAD_COINBASE, f"coinbase amount {p['amount']} != reward {cfg.block_reward}"))
        if p["height"] != block.header.height:
            out.append(Violation(BAD_COINBASE, "coinbase height does not match block"))
    if sum(1 for tx in txs if tx.kind == KIND_COINBASE) > 1:
        out.append(Violation(BAD_COINBASE, "more than one coinbase in block"))
    return out


def apply_block(state: LedgerState, block: Block, cfg: ConsensusConfig) -> LedgerState:
    """Post-state of a validated block: clone, apply txs in order, expire, set height."""
    new_state = state.clone()
    for index, tx in enumerate(block.transactions):
        ctx = (cfg.block_reward, block.header.height) if index == 0 else None
        apply_transaction(new_state, tx, block.header.timestamp, coinbase=ctx)
    expire_requests(new_state, block.header.timestamp)
    new_state.height = block.header.height
    return new_state


class ChainStore:
    """Block tree keyed by id with parent/child links, tips, and cumulative work."""

    def __init__(self, genesis: Block):
        gid = genesis.id_hex
        self.genesis_id = gid
        self.blocks: dict[str, Block] = {gid: genesis}
        self.children: dict[str, list[str]] = {gid: []}
        self.cumulative_work: dict[str, int] = {gid: 0}
        self.tips: set[str] = {gid}

    def __contains__(self, block_id: str) -> bool:
        return block_id in self.blocks

    def get(self, block_id: str) -> Block:
        return self.blocks[block_id]

    def add_block(self, block: Block) -> None:
        """Insert a block whose parent is present.  Caller validates first."""
        bid = block.id_hex
        if bid in self.blocks:
            return
        parent_id = block.header.prev_hash.hex()
        if parent_id not in self.blocks:
            raise UnknownParentError(parent_id)
        self.blocks[bid] = block
        self.children[bid] = []
        self.children[parent_id].append(bid)
        self.cumulative_work[bid] = (
            self.cumulative_work[parent_id] + (1 << block.header.pow_zero_bits)
        )
        self.tips.discard(parent_id)
        self.tips.add(bid)

    def path_to_genesis(self, block_id: str) -> list[str]:
        """Block ids from genesis to ``block_id`` inclusive."""
        path = []
        cursor = block_id
        while True:
            path.append(cursor)
            if cursor == self.genesis_id:
                break
            cursor = self.blocks[cursor].header.prev_hash.hex()
        path.reverse()
        return path

    def height_of(self, block_id: str) -> int:
        return self.blocks[block_id].header.height


def fork_choice(store: ChainStore) -> str:
    """Tip with maximal cumulative work; ties broken by smallest block id."""
    return min(store.tips, key=lambda tip: (-store.cumulative_work[tip], tip))


class Chain:
    """ChainStore plus per-block post-states and the genesis ledger."""

    def __init__(self, genesis: GenesisConfig):
        genesis.consensus.validate()
        self.genesis_config = genesis
        self.config = genesis.consensus
        block = genesis_block(genesis)
        self.store = ChainStore(block)
        base = LedgerState.genesis(genesis.allocations)
        base = expire_requests(base, block.header.timestamp)
        self.states: dict[str, LedgerState] = {block.id_hex: base}

    @property
    def genesis_id(self) -> str:
        return self.store.genesis_id

    def tip_id(self) -> str:
        return fork_choice(self.store)

    def tip_block(self) -> Block:
        return self.store.get(self.tip_id())

    def tip_state(self) -> LedgerState:
        return self.states[self.tip_id()]

    def height(self) -> int:
        return self.store.height_of(self.tip_id())

    def state_at(self, block_id: str) -> LedgerState:
        return self.states[block_id]

    def adopt(self, block: Block) -> list[Violation]:
        """Validate against the parent and insert; [] means adopted (or known)."""
        bid = block.id_hex
        if bid in self.store:
            return []
        parent_id = block.header.prev_hash.hex()
        if parent_id not in self.store:
            raise UnknownParentError(parent_id)
        parent = self.store.get(parent_id)
        violations = validate_block(block, parent, self.states[parent_id], self.config)
        if violations:
            return violations
        self.store.add_block(block)
        self.states[bid] = apply_block(self.states[parent_id], block, self.config)
        return []

    def canonical_chain(self) -> list[str]:
        return self.store.path_to_genesis(self.tip_id())

    def block_at_height(self, height: int) -> Optional[Block]:
        chain = self.canonical_chain()
        if 0 <= height < len(chain):
            return self.store.get(chain[height])
        return None

    def confirmations(self, block_id: str) -> int:
        """1 for the tip itself; 0 if the block is off the canonical chain."""
        chain = self.canonical_chain()
        try:
            index = chain.index(block_id)
        except ValueError:
            return 0
        return len(chain) - index

    def canonical_tx_index(self) -> dict[str, tuple[str, int]]:
        """tx id -> (block id, height) over the canonical chain."""
        index: dict[str, tuple[str, int]] = {}
        for bid in self.canonical_chain():
            block = self.store.get(bid)
            for tx in block.transactions:
                index[tx.id_hex] = (bid, block.header.height)
        return index
