"""CLI contract: exit codes, keygen, simulate, and write-parity with the API."""

from __future__ import annotations

import json
import socket
import threading
import time

import pytest
import uvicorn

from chainfab.api import create_app
from chainfab.chain import ConsensusConfig, GenesisConfig
from chainfab.cli import main
from chainfab.node import Node
from chainfab.runtime import NodeRuntime
from chainfab.transport import TcpTransport
from chainfab.tx import make_request
from chainfab.wallet import load_wallet
from tests.conftest import keypair_named

T0 = 1_700_000_000
DAY = 86_400


def free_port() -> int:
    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        return probe.getsockname()[1]


@pytest.fixture(scope="module")
def live_node(tmp_path_factory):
    """One mining node with a real HTTP API for CLI round trips."""
    tmp_path = tmp_path_factory.mktemp("cli-node")
    operator = keypair_named("operator")
    genesis = GenesisConfig(
        network_id="chainfab-cli-test",
        timestamp=T0,
        consensus=ConsensusConfig(mode="pow", pow_zero_bits=4, block_reward=50),
        allocations={operator.address: 500},
    )
    transport = TcpTransport(listen="127.0.0.1:0")
    node = Node(genesis=genesis, keypair=operator, transport=transport,
                role="validator", data_dir=tmp_path / "node")
    runtime = NodeRuntime(node, transport, block_interval=0.15)
    runtime.start()
    port = free_port()
    server = uvicorn.Server(uvicorn.Config(create_app(runtime), host="127.0.0.1",
                                           port=port, log_level="error"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("API server did not start")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}", node, operator
    server.should_exit = True
    thread.join(timeout=5)
    runtime.stop()


def run_cli(*argv: str, capsys) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestKeygen:
    def test_writes_keyfile_and_prints_address(self, tmp_path, capsys):
        out = tmp_path / "alice.key"
        code, stdout, _ = run_cli("keygen", "--out", str(out), capsys=capsys)
        assert code == 0
        keypair = load_wallet(out)
        assert stdout.strip() == keypair.address

    def test_refuses_overwrite(self, tmp_path, capsys):
        out = tmp_path / "alice.key"
        assert run_cli("keygen", "--out", str(out), capsys=capsys)[0] == 0
        code, _, stderr = run_cli("keygen", "--out", str(out), capsys=capsys)
        assert code == 1
        assert "refusing" in stderr

    def test_json_output(self, tmp_path, capsys):
        out = tmp_path / "alice.key"
        code, stdout, _ = run_cli("keygen", "--out", str(out), "--json",
                                  capsys=capsys)
        record = json.loads(stdout)
        assert record["address"] == load_wallet(out).address


class TestUsageErrors:
    def test_unknown_command_exits_1(self, capsys):
        code, _, stderr = run_cli("frobnicate", capsys=capsys)
        assert code == 1

    def test_missing_required_flag_exits_1(self, capsys):
        code, _, _ = run_cli("transfer", "--amount", "5", capsys=capsys)
        assert code == 1

    def test_unreachable_node_exits_2(self, tmp_path, capsys):
        key = tmp_path / "k.key"
        run_cli("keygen", "--out", str(key), capsys=capsys)
        code, _, stderr = run_cli(
            "status", "--node", "http://127.0.0.1:1", capsys=capsys)
        assert code == 2
        assert "unreachable" in stderr


class TestSimulate:
    def test_case_study_report(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        code, _, _ = run_cli("simulate", "scenarios/case_study.json",
                             "--out", str(out), capsys=capsys)
        assert code == 0
        report = json.loads(out.read_text())
        assert report["converged"] is True
        assert report["violations"] == []
        assert report["requests"]["milling-job"]["accepted_price"] == 60

    def test_report_to_stdout(self, capsys):
        code, stdout, _ = run_cli("simulate", "scenarios/case_study.json",
                                  capsys=capsys)
        assert code == 0
        assert json.loads(stdout)["converged"] is True

    def test_invalid_scenario_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"nodes": []}))
        code, _, stderr = run_cli("simulate", str(bad), capsys=capsys)
        assert code == 1
        assert "invalid scenario" in stderr


class TestAgainstLiveNode:
    def test_status(self, live_node, capsys):
        url, node, _ = live_node
        code, stdout, _ = run_cli("status", "--node", url, "--json", capsys=capsys)
        assert code == 0
        assert json.loads(stdout)["network_id"] == "chainfab-cli-test"

    def test_request_submit_and_chain_show(self, live_node, tmp_path, capsys):
        url, node, _ = live_node
        key = tmp_path / "customer.key"
        run_cli("keygen", "--out", str(key), capsys=capsys)
        code, stdout, _ = run_cli(
            "request", "submit", "--spec", "ellipse pocket in a cube",
            "--tag", "cnc-milling", "--due", "+2592000", "--max-price", "100",
            "--key", str(key), "--node", url, capsys=capsys)
        assert code == 0
        tx_id = stdout.strip()
        deadline = time.time() + 10
        while tx_id not in node.chain.canonical_tx_index():
            assert time.time() < deadline, "request never confirmed"
            time.sleep(0.05)
        code, stdout, _ = run_cli("chain", "show", "--node", url, capsys=capsys)
        assert code == 0
        assert "ServiceRequest" in stdout

    def test_cli_tx_id_matches_server_side_signing(self, live_node, tmp_path, capsys):
        """Identical inputs signed by the same key give identical tx ids whether
        the CLI builds the transaction or the node signs it server-side."""
        url, node, operator = live_node
        spec, tag, due, price = "parity part", "cnc-milling", int(time.time()) + DAY, 77
        local_tx = make_request(operator, spec, tag, due, price)
        import requests as _requests

        response = _requests.post(url + "/requests", json={
            "product_spec": spec, "process_tag": tag,
            "due_date": due, "max_price": price,
        }, timeout=10)
        assert response.status_code == 200
        assert response.json()["tx_id"] == local_tx.id_hex

    def test_transfer_and_accept_flow(self, live_node, tmp_path, capsys):
        url, node, operator = live_node
        customer_key = tmp_path / "cust.key"
        provider_key = tmp_path / "prov.key"
        run_cli("keygen", "--out", str(customer_key), capsys=capsys)
        run_cli("keygen", "--out", str(provider_key), capsys=capsys)
        customer = load_wallet(customer_key)
        operator_key = tmp_path / "op.key"
        from chainfab.wallet import save_wallet, wallet_record
        save_wallet(wallet_record(operator), operator_key)

        code, stdout, _ = run_cli("transfer", "--to", customer.address,
                                  "--amount", "100", "--key", str(operator_key),
                                  "--node", url, capsys=capsys)
        assert code == 0

        def confirmed(tx_id: str) -> bool:
            return tx_id in node.chain.canonical_tx_index()

        transfer_id = stdout.strip()
        deadline = time.time() + 10
        while not confirmed(transfer_id):
            assert time.time() < deadline
            time.sleep(0.05)

        code, stdout, _ = run_cli(
            "request", "submit", "--spec", "bracket", "--tag", "cnc-milling",
            "--due", "+2592000", "--max-price", "80", "--key", str(customer_key),
            "--node", url, capsys=capsys)
        request_id = stdout.strip()
        deadline = time.time() + 10
        while not confirmed(request_id):
            assert time.time() < deadline
            time.sleep(0.05)

        code, stdout, _ = run_cli(
            "offer", "submit", "--request", request_id, "--price", "60",
            "--due", "+1592000", "--key", str(provider_key), "--node", url,
            capsys=capsys)
        assert code == 0
        offer_id = stdout.strip()
        deadline = time.time() + 10
        while not confirmed(offer_id):
            assert time.time() < deadline
            time.sleep(0.05)

        code, stdout, _ = run_cli("accept", "--request", request_id,
                                  "--offer", offer_id, "--key", str(customer_key),
                                  "--node", url, capsys=capsys)
        assert code == 0
        accept_id = stdout.strip()
        deadline = time.time() + 10
        while not confirmed(accept_id):
            assert time.time() < deadline
            time.sleep(0.05)

        code, stdout, _ = run_cli("confirm", "--request", request_id,
                                  "--key", str(customer_key), "--node", url,
                                  capsys=capsys)
        assert code == 0
        confirm_id = stdout.strip()
        deadline = time.time() + 10
        while not confirmed(confirm_id):
            assert time.time() < deadline
            time.sleep(0.05)

        provider = load_wallet(provider_key)
        state = node.chain.tip_state()
        assert state.balance(provider.address) == 60
        assert state.balance(customer.address) == 40
        assert state.requests[request_id].status == "FULFILLED"
