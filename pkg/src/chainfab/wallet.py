"""Wallet keyfiles: JSON ``{"seed": hex, "public": hex, "address": "cm1..."}``."""

from __future__ import annotations

import json
import secrets
from pathlib import Path
from typing import Optional

from .crypto import KeyPair, generate_keypair


def new_wallet(seed: Optional[bytes] = None) -> dict:
    keypair = generate_keypair(seed if seed is not None else secrets.token_bytes(32))
    return wallet_record(keypair)


def wallet_record(keypair: KeyPair) -> dict:
    return {
        "seed": keypair.secret.hex(),
        "public": keypair.public.hex(),
        "address": keypair.address,
    }


def save_wallet(record: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def load_wallet(path: str | Path) -> KeyPair:
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    keypair = generate_keypair(bytes.fromhex(record["seed"]))
    stated = record.get("address")
    if stated is not None and stated != keypair.address:
        raise ValueError(f"keyfile address {stated} does not match its seed")
    return keypair
