"""Node configuration: a TOML file mirroring NodeConfig (docs/cli.md).

Relative paths resolve against the config file's directory; the
CHAINFAB_DATA_DIR environment variable overrides the data directory.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .chain import GenesisConfig
from .crypto import KeyPair, generate_keypair
from .node import Node, ProviderPolicy, ROLES
from .wallet import load_wallet, new_wallet, save_wallet


@dataclass
class NodeConfig:
    role: str = "observer"
    genesis: str = "genesis.json"
    data_dir: str = "chainfab-data"
    p2p_listen: str = "127.0.0.1:7771"
    api_listen: str = "127.0.0.1:7772"
    advertise: Optional[str] = None
    bootstrap: list[str] = field(default_factory=list)
    seed: Optional[str] = None
    key_file: Optional[str] = None
    block_interval: float = 5.0
    produce_blocks: Optional[bool] = None
    produce_empty: bool = False
    max_block_txs: int = 100
    mine_budget: int = 500_000
    policy: Optional[dict] = None
    base_dir: Path = field(default_factory=Path)

    @classmethod
    def load(cls, path: str | Path) -> "NodeConfig":
        path = Path(path)
        with open(path, "rb") as fh:
            obj = tomllib.load(fh)
        known = {
            "role", "genesis", "data_dir", "p2p_listen", "api_listen", "advertise",
            "bootstrap", "seed", "key_file", "block_interval", "produce_blocks",
            "produce_empty", "max_block_txs", "mine_budget", "policy",
        }
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        config = cls(base_dir=path.parent.resolve(), **obj)
        if config.role not in ROLES:
            raise ValueError(f"unknown role {config.role!r}")
        return config

    def _resolve(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def resolve_data_dir(self) -> Path:
        override = os.environ.get("CHAINFAB_DATA_DIR")
        return Path(override) if override else self._resolve(self.data_dir)

    def load_genesis(self) -> GenesisConfig:
        return GenesisConfig.load(self._resolve(self.genesis))

    def load_keypair(self) -> KeyPair:
        """Configured seed or keyfile; otherwise a persistent per-node key."""
        if self.seed:
            return generate_keypair(bytes.fromhex(self.seed))
        if self.key_file:
            return load_wallet(self._resolve(self.key_file))
        key_path = self.resolve_data_dir() / "node.key"
        if key_path.exists():
            return load_wallet(key_path)
        record = new_wallet()
        save_wallet(record, key_path)
        return generate_keypair(bytes.fromhex(record["seed"]))

    def build_node(self, transport) -> Node:
        policy = ProviderPolicy.from_dict(self.policy) if self.policy else None
        return Node(
            genesis=self.load_genesis(),
            keypair=self.load_keypair(),
            transport=transport,
            role=self.role,
            policy=policy,
            data_dir=self.resolve_data_dir(),
            produce_blocks=self.produce_blocks,
            produce_empty=self.produce_empty,
            max_block_txs=self.max_block_txs,
            mine_budget=self.mine_budget,
        )
