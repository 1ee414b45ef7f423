"""Envelope codec, peer table, dedup, inbound verification, gossip and sync."""

from __future__ import annotations

import pytest

from chainfab.chain import Chain, ConsensusConfig, GenesisConfig, assemble_block, mine_pow
from chainfab.crypto import hash_bytes
from chainfab.node import Node
from chainfab.p2p import (
    DedupCache,
    NetMessage,
    PeerTable,
    verify_inbound,
)
from chainfab.tx import make_transfer
from tests.conftest import keypair_named

T0 = 1_700_000_000


class CaptureTransport:
    """Records every cast; optionally fails sends to chosen endpoints."""

    def __init__(self, local: str, fail_for=()):
        self.local = local
        self.sent: list[tuple[str, bytes]] = []
        self.fail_for = set(fail_for)

    def cast(self, endpoint: str, data: bytes) -> bool:
        self.sent.append((endpoint, data))
        return endpoint not in self.fail_for


def make_node(name: str, genesis: GenesisConfig, **kwargs) -> tuple[Node, CaptureTransport]:
    transport = CaptureTransport(f"test://{name}")
    node = Node(genesis=genesis, keypair=keypair_named(name),
                transport=transport, role=kwargs.pop("role", "observer"), **kwargs)
    return node, transport


def pump(nodes: dict[str, tuple[Node, CaptureTransport]], now: int,
         max_rounds: int = 50) -> int:
    """Synchronously deliver queued casts until quiescence; returns deliveries."""
    endpoints = {t.local: n for n, t in nodes.values()}
    delivered = 0
    for _ in range(max_rounds):
        progressed = False
        for node, transport in nodes.values():
            pending, transport.sent = transport.sent, []
            for endpoint, raw in pending:
                dest = endpoints.get(endpoint)
                if dest is not None:
                    dest.on_message(raw, now)
                    delivered += 1
                    progressed = True
        if not progressed:
            return delivered
    raise AssertionError("gossip did not quiesce: possible relay loop")


class TestNetMessage:
    def test_roundtrip(self, alice):
        msg = NetMessage("Ping", {"nonce": 7}, alice.address, "chainfab-test")
        assert NetMessage.decode(msg.encode()) == msg

    def test_dedup_key_ignores_sender(self, alice, bob):
        a = NetMessage("TxGossip", {"tx": {"k": 1}}, alice.address, "net")
        b = NetMessage("TxGossip", {"tx": {"k": 1}}, bob.address, "net")
        assert a.dedup_key() == b.dedup_key()
        c = NetMessage("TxGossip", {"tx": {"k": 2}}, alice.address, "net")
        assert a.dedup_key() != c.dedup_key()

    def test_rejects_garbage(self):
        with pytest.raises(Exception):
            NetMessage.decode(b"\xff\xfe not json")
        with pytest.raises(ValueError):
            NetMessage.from_wire({"kind": "Nope", "payload": {}, "sender": "x",
                                  "network_id": "n"})


class TestPeerTable:
    def test_upsert_and_cap(self):
        table = PeerTable(max_peers=2)
        a, b, c = (keypair_named(n).address for n in "abc")
        assert table.upsert(a, "e1", 0)
        assert table.upsert(b, "e2", 0)
        assert not table.upsert(c, "e3", 0)  # full
        assert table.upsert(a, "e1-new", 5)  # refresh existing still fine
        assert table.get(a).endpoint == "e1-new"

    def test_penalize_to_ban(self):
        table = PeerTable()
        a = keypair_named("a").address
        table.upsert(a, "e1", 0)
        for _ in range(9):
            assert not table.penalize(a, 10)
        assert table.penalize(a, 10)  # score hits zero: banned
        assert table.is_banned(a)
        assert a not in table
        assert not table.upsert(a, "e1", 1)  # banned peers never re-enter


class TestDedupCache:
    def test_fifo_eviction(self):
        cache = DedupCache(capacity=3)
        keys = [hash_bytes(bytes([i])) for i in range(4)]
        for k in keys[:3]:
            assert not cache.seen_or_add(k)
        assert cache.seen_or_add(keys[1])
        assert not cache.seen_or_add(keys[3])  # evicts keys[0]
        assert not cache.seen_or_add(keys[0])


class TestVerifyInbound:
    def net(self, genesis):
        return genesis.network_id, genesis.consensus

    def test_random_bytes_malformed(self, genesis):
        nid, cfg = self.net(genesis)
        verdict = verify_inbound(b"\x00\x01randombytes", nid, cfg)
        assert not verdict.accepted and verdict.reason == "MalformedMessage"

    def test_network_mismatch(self, alice, genesis):
        nid, cfg = self.net(genesis)
        msg = NetMessage("Ping", {}, alice.address, "other-net")
        verdict = verify_inbound(msg.encode(), nid, cfg)
        assert not verdict.accepted and verdict.reason == "NetworkMismatch"

    def test_valid_tx_gossip(self, alice, bob, genesis):
        nid, cfg = self.net(genesis)
        tx = make_transfer(alice, bob.address, 5)
        msg = NetMessage("TxGossip", {"tx": tx.to_wire()}, alice.address, nid)
        verdict = verify_inbound(msg.encode(), nid, cfg)
        assert verdict.accepted and verdict.transaction == tx

    def test_tx_gossip_bad_signature(self, alice, bob, genesis):
        nid, cfg = self.net(genesis)
        tx = make_transfer(alice, bob.address, 5)
        wire = tx.to_wire()
        wire["signature"] = "00" * 64
        msg = NetMessage("TxGossip", {"tx": wire}, alice.address, nid)
        verdict = verify_inbound(msg.encode(), nid, cfg)
        assert not verdict.accepted and verdict.reason == "BadSignature"

    def test_coinbase_gossip_rejected(self, alice, genesis):
        from chainfab.tx import make_coinbase
        nid, cfg = self.net(genesis)
        cb = make_coinbase(alice.address, 50, 1)
        msg = NetMessage("TxGossip", {"tx": cb.to_wire()}, alice.address, nid)
        verdict = verify_inbound(msg.encode(), nid, cfg)
        assert not verdict.accepted and verdict.reason == "BadCoinbase"

    def test_block_gossip_pow_gate(self, alice, miner, genesis):
        from dataclasses import replace

        from chainfab.chain import Block, meets_pow_target

        nid, cfg = self.net(genesis)
        chain = Chain(genesis)
        block = assemble_block(chain.tip_block().header, [], miner.address,
                               T0 + 5, cfg, chain.tip_state())
        bad_nonce = next(n for n in range(100_000)
                         if not meets_pow_target(
                             replace(block.header, nonce=n).block_id,
                             cfg.pow_zero_bits))
        unmined = NetMessage(
            "BlockGossip",
            {"block": Block(replace(block.header, nonce=bad_nonce),
                            block.transactions).to_wire()},
            alice.address, nid)
        verdict = verify_inbound(unmined.encode(), nid, cfg)
        assert not verdict.accepted and verdict.reason == "BadPoW"
        mined = mine_pow(block, 10_000_000)
        msg = NetMessage("BlockGossip", {"block": mined.to_wire()}, alice.address, nid)
        verdict = verify_inbound(msg.encode(), nid, cfg)
        assert verdict.accepted and verdict.block == mined


class TestHandshake:
    def test_matching_network_connects_both_sides(self, genesis):
        nodes = {
            "a": make_node("a", genesis),
            "b": make_node("b", genesis),
        }
        a_node, _ = nodes["a"]
        b_node, _ = nodes["b"]
        a_node.connect("test://b", T0)
        pump(nodes, T0)
        assert b_node.address in a_node.peers
        assert a_node.address in b_node.peers

    def test_network_mismatch_not_connected(self, genesis, alice):
        other = GenesisConfig(network_id="chainfab-other", timestamp=genesis.timestamp,
                              consensus=genesis.consensus,
                              allocations=genesis.allocations)
        nodes = {
            "a": make_node("a", genesis),
            "b": make_node("b", other),
        }
        a_node, _ = nodes["a"]
        b_node, _ = nodes["b"]
        a_node.connect("test://b", T0)
        pump(nodes, T0)
        assert len(a_node.peers) == 0 and len(b_node.peers) == 0

    def test_banned_peer_ignored(self, genesis):
        nodes = {
            "a": make_node("a", genesis),
            "b": make_node("b", genesis),
        }
        a_node, _ = nodes["a"]
        b_node, _ = nodes["b"]
        b_node.peers.banned.add(a_node.address)
        a_node.connect("test://b", T0)
        pump(nodes, T0)
        assert a_node.address not in b_node.peers
        assert b_node.address not in a_node.peers

    def test_peer_list_introduces_third_party(self, genesis):
        nodes = {name: make_node(name, genesis) for name in ("a", "b", "c")}
        nodes["a"][0].connect("test://b", T0)
        pump(nodes, T0)
        # c joins via b and learns about a through b's PeerList
        nodes["c"][0].connect("test://b", T0)
        pump(nodes, T0)
        assert nodes["a"][0].address in nodes["c"][0].peers
        assert nodes["c"][0].address in nodes["a"][0].peers


def mesh(genesis, names, now=T0, **kwargs):
    nodes = {name: make_node(name, genesis, **kwargs) for name in names}
    listed = list(names)
    for i, name in enumerate(listed):
        for previous in listed[:i]:
            nodes[name][0].connect(f"test://{previous}", now)
    pump(nodes, now)
    return nodes


class TestGossip:
    def test_forwards_to_all_but_origin(self, genesis, alice, bob):
        nodes = mesh(genesis, ["hub", "p1", "p2", "p3", "p4"])
        hub, transport = nodes["hub"]
        origin = nodes["p2"][0].address
        tx = make_transfer(alice, bob.address, 5)
        msg = NetMessage("TxGossip", {"tx": tx.to_wire()}, origin, genesis.network_id)
        transport.sent.clear()
        hub.on_message(msg.encode(), T0)
        forwarded_to = {e for e, _ in transport.sent}
        assert forwarded_to == {"test://p1", "test://p3", "test://p4"}

    def test_second_gossip_suppressed(self, genesis, alice, bob):
        nodes = mesh(genesis, ["hub", "p1", "p2"])
        hub, transport = nodes["hub"]
        origin = nodes["p1"][0].address
        tx = make_transfer(alice, bob.address, 5)
        msg = NetMessage("TxGossip", {"tx": tx.to_wire()}, origin, genesis.network_id)
        hub.on_message(msg.encode(), T0)
        transport.sent.clear()
        hub.on_message(msg.encode(), T0)
        assert transport.sent == []

    def test_gossip_reaches_all_nodes_and_terminates(self, genesis, alice, bob):
        names = [f"n{i}" for i in range(5)]
        nodes = mesh(genesis, names)
        tx = make_transfer(alice, bob.address, 5)
        nodes["n0"][0].submit_transaction(tx, T0)
        delivered = pump(nodes, T0)
        for name in names:
            assert tx.id_hex in nodes[name][0].mempool
        # flooding with dedup: bounded by nodes x edges
        assert delivered <= 5 * 20

    def test_send_failure_decrements_score(self, genesis, alice, bob):
        nodes = mesh(genesis, ["a", "b"])
        a_node, transport = nodes["a"]
        b_id = nodes["b"][0].address
        transport.fail_for.add("test://b")
        before = a_node.peers.get(b_id).score
        tx = make_transfer(alice, bob.address, 5)
        a_node.submit_transaction(tx, T0)
        assert a_node.peers.get(b_id).score == before - 1


class TestSync:
    def grow(self, node, blocks, start=T0):
        for i in range(blocks):
            assert node.produce(start + 5 * (i + 1)) is not None

    def test_fresh_node_adopts_peer_chain(self, genesis):
        nodes = {
            "veteran": make_node("veteran", genesis, role="validator",
                                 produce_empty=True),
            "fresh": make_node("fresh", genesis),
        }
        veteran = nodes["veteran"][0]
        self.grow(veteran, 10)
        assert veteran.chain.height() == 10
        nodes["fresh"][0].connect("test://veteran", T0 + 100)
        pump(nodes, T0 + 100)
        fresh = nodes["fresh"][0]
        assert fresh.chain.height() == 10
        assert fresh.chain.tip_id() == veteran.chain.tip_id()
        assert fresh.synced

    def test_already_synced_adopts_nothing(self, genesis):
        nodes = mesh(genesis, ["a", "b"])
        a_node, transport = nodes["a"]
        height_before = a_node.chain.height()
        transport.sent.clear()
        nodes["b"][0].connect("test://a", T0 + 1)
        pump(nodes, T0 + 1)
        assert a_node.chain.height() == height_before

    def test_forked_nodes_reconverge(self, genesis):
        nodes = {
            "left": make_node("left", genesis, role="validator", produce_empty=True),
            "right": make_node("right", genesis, role="validator", produce_empty=True),
        }
        left, right = nodes["left"][0], nodes["right"][0]
        self.grow(left, 3)
        self.grow(right, 5)
        assert left.chain.tip_id() != right.chain.tip_id()
        left.connect("test://right", T0 + 200)
        pump(nodes, T0 + 200)
        assert left.chain.tip_id() == right.chain.tip_id()
        assert left.chain.height() >= 5

    def test_invalid_block_from_peer_penalized(self, genesis, alice):
        nodes = mesh(genesis, ["victim", "cheat"])
        victim, _ = nodes["victim"]
        cheat_node, _ = nodes["cheat"]
        # mine a block that pays double reward: passes the PoW gate, fails adoption
        cheat_cfg = ConsensusConfig(mode="pow",
                                    pow_zero_bits=genesis.consensus.pow_zero_bits,
                                    block_reward=genesis.consensus.block_reward * 2)
        bad = assemble_block(victim.chain.tip_block().header, [],
                             cheat_node.address, T0 + 5, cheat_cfg,
                             victim.chain.tip_state())
        bad = mine_pow(bad, 10_000_000)
        msg = NetMessage("BlockGossip", {"block": bad.to_wire()},
                         cheat_node.address, genesis.network_id)
        before = victim.peers.get(cheat_node.address).score
        victim.on_message(msg.encode(), T0 + 6)
        assert victim.peers.get(cheat_node.address).score == before - 10
        assert bad.id_hex not in victim.chain.store

    def test_ping_pong(self, genesis):
        nodes = mesh(genesis, ["a", "b"])
        a_node, transport = nodes["a"]
        b_node, _ = nodes["b"]
        msg = NetMessage("Ping", {"nonce": 9}, b_node.address, genesis.network_id)
        transport.sent.clear()
        a_node.on_message(msg.encode(), T0 + 60)
        assert len(transport.sent) == 1
        endpoint, raw = transport.sent[0]
        assert endpoint == "test://b"
        pong = NetMessage.decode(raw)
        assert pong.kind == "Pong" and pong.payload["nonce"] == 9
