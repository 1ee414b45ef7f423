"""Shared fixtures: deterministic keypairs and a small funded genesis."""

from __future__ import annotations

import pytest

from chainfab.chain import ConsensusConfig, GenesisConfig
from chainfab.crypto import generate_keypair, hash_bytes


def keypair_named(name: str):
    """Stable keypair for a test persona; seed is a hash of the name."""
    return generate_keypair(hash_bytes(name.encode()))


@pytest.fixture
def alice():
    return keypair_named("alice")


@pytest.fixture
def bob():
    return keypair_named("bob")


@pytest.fixture
def carol():
    return keypair_named("carol")


@pytest.fixture
def miner():
    return keypair_named("miner")


@pytest.fixture
def genesis(alice, bob, carol):
    """PoW network, easy target, customer alice funded with 100 units."""
    return GenesisConfig(
        network_id="chainfab-test",
        timestamp=1_700_000_000,
        consensus=ConsensusConfig(mode="pow", pow_zero_bits=4, block_reward=50,
                                  finality_depth=6),
        allocations={alice.address: 100},
    )
