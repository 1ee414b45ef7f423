"""Operator CLI: wallets, a running node, marketplace writes, queries, simulation.

Write commands sign locally with a keyfile and POST the pre-signed transaction
to a node's API; the CLI has no privileged path.  Exit codes: 0 success,
1 validation or usage error, 2 unreachable node or I/O failure.
Flag reference in docs/cli.md.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path
from typing import Any, Optional

import click
import requests

from .sim import Scenario, ScenarioInvalid, check_invariants, run_scenario
from .tx import (
    make_acceptance,
    make_confirmation,
    make_offer,
    make_request,
    make_transfer,
)
from .wallet import load_wallet, new_wallet, save_wallet

DEFAULT_NODE = "http://127.0.0.1:7772"


class ApiError(click.ClickException):
    """Node answered with a validation error (exit 1)."""


def _api(base: str, method: str, path: str, **kwargs) -> Any:
    url = base.rstrip("/") + path
    response = requests.request(method, url, timeout=10, **kwargs)
    if response.status_code >= 400:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        raise ApiError(f"{response.status_code}: {json.dumps(detail)}")
    return response.json()


def _emit(payload: Any, as_json: bool, human: str = "") -> None:
    if as_json:
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    else:
        click.echo(human if human else json.dumps(payload, indent=2, sort_keys=True))


def _parse_due(value: str) -> int:
    """Absolute unix seconds, or +N meaning N seconds from now."""
    if value.startswith("+"):
        return int(time.time()) + int(value[1:])
    return int(value)


node_option = click.option("--node", "node_url", default=DEFAULT_NODE,
                           envvar="CHAINFAB_NODE", show_default=True,
                           help="Node API base URL.")
json_option = click.option("--json", "as_json", is_flag=True,
                           help="Machine-readable JSON output.")
key_option = click.option("--key", "key_path", required=True,
                          type=click.Path(exists=True, dir_okay=False),
                          help="Keyfile that signs the transaction.")


@click.group()
def cli() -> None:
    """chainfab: decentralized cloud-manufacturing marketplace."""


@cli.command()
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Where to write the keyfile.")
@json_option
def keygen(out_path: str, as_json: bool) -> None:
    """Generate a wallet keyfile and print its address."""
    path = Path(out_path)
    if path.exists():
        raise click.ClickException(f"{path} already exists; refusing to overwrite")
    record = new_wallet()
    save_wallet(record, path)
    _emit({"address": record["address"], "keyfile": str(path)}, as_json,
          human=record["address"])


@cli.group()
def node() -> None:
    """Run and manage a node."""


@node.command("run")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="TOML node configuration.")
def node_run(config_path: str) -> None:
    """Run a full node (p2p + HTTP API) until interrupted."""
    import uvicorn

    from .api import create_app
    from .config import NodeConfig
    from .runtime import NodeRuntime
    from .transport import TcpTransport, parse_endpoint

    config = NodeConfig.load(config_path)
    transport = TcpTransport(listen=config.p2p_listen, advertise=config.advertise)
    built = config.build_node(transport)
    runtime = NodeRuntime(built, transport,
                          block_interval=config.block_interval,
                          bootstrap=tuple(config.bootstrap))
    runtime.start()
    host, port = parse_endpoint(config.api_listen)
    click.echo(f"node {built.address} | p2p {transport.local} | api {config.api_listen}",
               err=True)
    try:
        uvicorn.run(create_app(runtime), host=host, port=port, log_level="warning")
    finally:
        runtime.stop()


@cli.group()
def request() -> None:
    """Service requests."""


@request.command("submit")
@click.option("--spec", "product_spec", required=True, help="What to manufacture.")
@click.option("--tag", "process_tag", required=True,
              help="Process capability tag, e.g. cnc-milling.")
@click.option("--due", required=True,
              help="Due date: unix seconds, or +N for N seconds from now.")
@click.option("--max-price", type=int, required=True)
@key_option
@node_option
@json_option
def request_submit(product_spec: str, process_tag: str, due: str, max_price: int,
                   key_path: str, node_url: str, as_json: bool) -> None:
    """Post a service request."""
    keypair = load_wallet(key_path)
    tx = make_request(keypair, product_spec, process_tag, _parse_due(due), max_price)
    result = _api(node_url, "POST", "/requests", json={"tx": tx.to_wire()})
    _emit(result, as_json, human=result["tx_id"])


@cli.group()
def offer() -> None:
    """Service offers."""


@offer.command("submit")
@click.option("--request", "request_id", required=True, help="Request tx id.")
@click.option("--price", type=int, required=True)
@click.option("--due", required=True,
              help="Promised due date: unix seconds or +N.")
@key_option
@node_option
@json_option
def offer_submit(request_id: str, price: int, due: str, key_path: str,
                 node_url: str, as_json: bool) -> None:
    """Quote on an open request."""
    keypair = load_wallet(key_path)
    tx = make_offer(keypair, request_id, price, _parse_due(due))
    result = _api(node_url, "POST", "/offers", json={"tx": tx.to_wire()})
    _emit(result, as_json, human=result["tx_id"])


@cli.command()
@click.option("--request", "request_id", required=True)
@click.option("--offer", "offer_id", required=True)
@key_option
@node_option
@json_option
def accept(request_id: str, offer_id: str, key_path: str, node_url: str,
           as_json: bool) -> None:
    """Accept an offer (locks the quoted price in escrow)."""
    keypair = load_wallet(key_path)
    tx = make_acceptance(keypair, request_id, offer_id)
    result = _api(node_url, "POST", "/accept", json={"tx": tx.to_wire()})
    _emit(result, as_json, human=result["tx_id"])


@cli.command()
@click.option("--request", "request_id", required=True)
@key_option
@node_option
@json_option
def confirm(request_id: str, key_path: str, node_url: str, as_json: bool) -> None:
    """Confirm delivery (releases escrow to the provider)."""
    keypair = load_wallet(key_path)
    tx = make_confirmation(keypair, request_id)
    result = _api(node_url, "POST", "/confirm", json={"tx": tx.to_wire()})
    _emit(result, as_json, human=result["tx_id"])


@cli.command()
@click.option("--to", required=True, help="Recipient address.")
@click.option("--amount", type=int, required=True)
@key_option
@node_option
@json_option
def transfer(to: str, amount: int, key_path: str, node_url: str, as_json: bool) -> None:
    """Send currency units to another account."""
    keypair = load_wallet(key_path)
    tx = make_transfer(keypair, to, amount)
    result = _api(node_url, "POST", "/transfer", json={"tx": tx.to_wire()})
    _emit(result, as_json, human=result["tx_id"])


@cli.group()
def chain() -> None:
    """Chain queries."""


@chain.command("show")
@click.option("--from", "from_height", type=int, default=0, show_default=True)
@click.option("--to", "to_height", type=int, default=None)
@node_option
@json_option
def chain_show(from_height: int, to_height: Optional[int], node_url: str,
               as_json: bool) -> None:
    """Print the canonical chain (or a height window)."""
    params = {"from": from_height}
    if to_height is not None:
        params["to"] = to_height
    result = _api(node_url, "GET", "/chain", params=params)
    if as_json:
        _emit(result, True)
        return
    for block in result["blocks"]:
        txs = ", ".join(t["kind"] for t in block["transactions"]) or "-"
        click.echo(f"#{block['height']} {block['id'][:16]} "
                   f"t={block['header']['timestamp']} [{txs}]")


@cli.command()
@node_option
@json_option
def status(node_url: str, as_json: bool) -> None:
    """Node status line."""
    result = _api(node_url, "GET", "/status")
    _emit(result, as_json,
          human=(f"{result['network_id']} h={result['height']} "
                 f"tip={result['tip'][:16]} peers={result['peers']} "
                 f"mempool={result['mempool']} synced={result['synced']}"))


@cli.command()
@click.argument("scenario_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False),
              help="Write the report here instead of stdout.")
def simulate(scenario_path: str, out_path: Optional[str]) -> None:
    """Run a deterministic multi-node scenario and emit its JSON report."""
    try:
        scenario = Scenario.load(scenario_path)
    except ScenarioInvalid as exc:
        raise click.ClickException(f"invalid scenario: {exc}")
    except (OSError, ValueError) as exc:
        raise click.ClickException(f"cannot load scenario: {exc}")
    report = run_scenario(scenario)
    violations = check_invariants(report, scenario)
    report["violations"] = violations
    text = json.dumps(report, indent=2, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")
        click.echo(f"report written to {out_path}", err=True)
    else:
        click.echo(text)
    if violations:
        raise click.ClickException(f"invariant violations: {violations}")


def main(argv: Optional[list[str]] = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except requests.RequestException as exc:
        click.echo(f"node unreachable: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
