"""Deterministic multi-node simulation with scripted marketplace flows and faults.

The engine drives real Node state machines over a virtual-clock event queue:
every cast is scheduled with seeded latency, drops, and partition filtering,
so identical (scenario, seed) pairs replay bit-for-bit.  Scenario files are
plain JSON (docs/scenario.md); the canonical milling-job scenario ships as
scenarios/case_study.json.
"""

from __future__ import annotations

import heapq
import json
import random
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .chain import ConsensusConfig, GenesisConfig, MODE_AUTHORITY
from .contract import select_offer
from .crypto import generate_keypair, hash_bytes, hash_canonical
from .node import (
    CorruptStoreError,
    Node,
    ProviderPolicy,
    ROLE_OBSERVER,
    ROLE_PROVIDER,
    ROLE_VALIDATOR,
    SubmitRejected,
)
from .tx import make_acceptance, make_confirmation, make_request, make_transfer

ACTION_KINDS = ("submit_request", "accept_best", "confirm_delivery", "transfer",
                "kill", "restart", "partition", "heal")
FAULT_KINDS = ("kill", "restart", "partition", "heal")


class ScenarioInvalid(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class NodeSpec:
    name: str
    role: str
    balance: int = 0
    policy: Optional[dict] = None
    produce: Optional[bool] = None


@dataclass
class NetworkConfig:
    latency_ms: tuple[int, int] = (5, 40)
    drop_probability: float = 0.0
    block_interval: int = 5
    retry_interval: int = 5
    produce_empty: bool = True


@dataclass
class Scenario:
    name: str
    seed: int
    duration: int  # virtual seconds of activity; messages drain afterwards
    consensus: ConsensusConfig
    network: NetworkConfig
    nodes: list[NodeSpec]
    actions: list[dict] = field(default_factory=list)
    genesis_time: int = 1_700_000_000
    tamper_drill: bool = False

    @classmethod
    def from_dict(cls, obj: dict) -> "Scenario":
        problems: list[str] = []
        if not isinstance(obj, dict):
            raise ScenarioInvalid(["scenario must be a JSON object"])
        nodes = []
        raw_nodes = obj.get("nodes", [])
        if not isinstance(raw_nodes, list) or not raw_nodes:
            problems.append("nodes: must be a non-empty list")
            raw_nodes = []
        names = set()
        for i, raw in enumerate(raw_nodes):
            name = raw.get("name")
            if not isinstance(name, str) or not name:
                problems.append(f"nodes[{i}].name: required string")
                continue
            if name in names:
                problems.append(f"nodes[{i}].name: duplicate {name!r}")
            names.add(name)
            role = raw.get("role", ROLE_OBSERVER)
            if role not in ("provider", "customer", "validator", "observer"):
                problems.append(f"nodes[{i}].role: unknown role {role!r}")
            nodes.append(NodeSpec(
                name=name,
                role=role,
                balance=int(raw.get("balance", 0)),
                policy=raw.get("policy"),
                produce=raw.get("produce"),
            ))
        actions = obj.get("actions", [])
        if not isinstance(actions, list):
            problems.append("actions: must be a list")
            actions = []
        for i, action in enumerate(actions):
            problems.extend(_check_action(action, i, names))
        net = obj.get("network", {})
        latency = net.get("latency_ms", [5, 40])
        if (not isinstance(latency, list) or len(latency) != 2
                or latency[0] > latency[1] or latency[0] < 0):
            problems.append("network.latency_ms: must be [lo, hi] with 0 <= lo <= hi")
            latency = [5, 40]
        raw_consensus = obj.get("consensus", {})
        try:
            if (raw_consensus.get("mode") == MODE_AUTHORITY
                    and not raw_consensus.get("authorities")):
                # roster defaults to the scenario's validator nodes at build time
                consensus = ConsensusConfig(
                    mode=MODE_AUTHORITY, pow_zero_bits=0, authorities=(),
                    block_reward=int(raw_consensus.get("block_reward", 50)),
                    finality_depth=int(raw_consensus.get("finality_depth", 6)))
            else:
                consensus = ConsensusConfig.from_dict(raw_consensus)
        except ValueError as exc:
            problems.append(f"consensus: {exc}")
            consensus = ConsensusConfig()
        if problems:
            raise ScenarioInvalid(problems)
        return cls(
            name=obj.get("name", "scenario"),
            seed=int(obj.get("seed", 0)),
            duration=int(obj.get("duration", 60)),
            consensus=consensus,
            network=NetworkConfig(
                latency_ms=(int(latency[0]), int(latency[1])),
                drop_probability=float(net.get("drop_probability", 0.0)),
                block_interval=int(net.get("block_interval", 5)),
                retry_interval=int(net.get("retry_interval", 5)),
                produce_empty=bool(net.get("produce_empty", True)),
            ),
            nodes=nodes,
            actions=[dict(a) for a in actions],
            genesis_time=int(obj.get("genesis_time", 1_700_000_000)),
            tamper_drill=bool(obj.get("tamper_drill", False)),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _check_action(action: Any, i: int, names: set[str]) -> list[str]:
    problems = []
    if not isinstance(action, dict):
        return [f"actions[{i}]: must be an object"]
    kind = action.get("kind")
    if kind not in ACTION_KINDS:
        return [f"actions[{i}].kind: unknown {kind!r}"]
    if not isinstance(action.get("at"), int) or action["at"] < 0:
        problems.append(f"actions[{i}].at: required non-negative integer seconds")
    if kind in ("submit_request", "accept_best", "confirm_delivery", "transfer",
                "kill", "restart"):
        if action.get("node") not in names:
            problems.append(f"actions[{i}].node: unknown node {action.get('node')!r}")
    if kind == "submit_request":
        for key in ("label", "product_spec", "process_tag"):
            if not isinstance(action.get(key), str) or not action[key]:
                problems.append(f"actions[{i}].{key}: required string")
        for key in ("due_in", "max_price"):
            if not isinstance(action.get(key), int) or action[key] < 1:
                problems.append(f"actions[{i}].{key}: required positive integer")
    if kind in ("accept_best", "confirm_delivery"):
        if not isinstance(action.get("request"), str):
            problems.append(f"actions[{i}].request: required request label")
    if kind == "transfer":
        if not isinstance(action.get("to"), str):
            problems.append(f"actions[{i}].to: required node name or address")
        if not isinstance(action.get("amount"), int) or action["amount"] < 1:
            problems.append(f"actions[{i}].amount: required positive integer")
    if kind == "partition":
        groups = action.get("groups")
        if (not isinstance(groups, list) or len(groups) < 2
                or any(not isinstance(g, list) for g in groups)):
            problems.append(f"actions[{i}].groups: need >= 2 lists of node names")
        else:
            listed = [n for g in groups for n in g]
            unknown = [n for n in listed if n not in names]
            if unknown:
                problems.append(f"actions[{i}].groups: unknown nodes {unknown}")
            if len(set(listed)) != len(listed):
                problems.append(f"actions[{i}].groups: node appears twice")
    return problems


def inject_fault(scenario: Scenario, kind: str, target: Any, at: int) -> Scenario:
    """Append a fault to the timeline; target is a node name or partition groups."""
    if kind not in FAULT_KINDS:
        raise ScenarioInvalid([f"unknown fault kind {kind!r}"])
    names = {spec.name for spec in scenario.nodes}
    action: dict[str, Any] = {"kind": kind, "at": at}
    if kind in ("kill", "restart"):
        if target not in names:
            raise ScenarioInvalid([f"unknown target node {target!r}"])
        action["node"] = target
    elif kind == "partition":
        action["groups"] = target
        problems = _check_action(action, len(scenario.actions), names)
        if problems:
            raise ScenarioInvalid(problems)
    scenario.actions.append(action)
    return scenario


@dataclass
class _SimNode:
    spec: NodeSpec
    endpoint: str
    keypair: Any
    data_dir: Path
    node: Optional[Node] = None
    alive: bool = False


class _SimTransport:
    def __init__(self, engine: "SimEngine", endpoint: str):
        self.engine = engine
        self._endpoint = endpoint

    @property
    def local(self) -> str:
        return self._endpoint

    def cast(self, endpoint: str, data: bytes) -> bool:
        return self.engine.cast(self._endpoint, endpoint, data)


class SimEngine:
    """Virtual-time event loop over real Node instances."""

    def __init__(self, scenario: Scenario, workdir: Path):
        self.scenario = scenario
        self.rng = random.Random(scenario.seed)
        self.workdir = workdir
        self.now_ms = 0
        self._seq = 0
        self._heap: list[tuple[int, int, str, dict]] = []
        self.trace: list[list] = []
        self.stats = {"sent": 0, "delivered": 0, "dropped": 0, "refused": 0,
                      "latency_total_ms": 0}
        self.labels: dict[str, str] = {}  # request label -> tx id
        self.action_log: list[dict] = []
        self.fault_checkpoints: list[dict] = []
        self.partition: Optional[dict[str, int]] = None

        keys = {spec.name: generate_keypair(
            hash_bytes(f"sim:{scenario.seed}:{spec.name}".encode()))
            for spec in scenario.nodes}
        allocations = {keys[s.name].address: s.balance
                       for s in scenario.nodes if s.balance > 0}
        consensus = scenario.consensus
        if consensus.mode == MODE_AUTHORITY and not consensus.authorities:
            roster = tuple(keys[s.name].address for s in scenario.nodes
                           if s.role == ROLE_VALIDATOR)
            if not roster:
                raise ScenarioInvalid(
                    ["consensus: authority mode needs at least one validator node"])
            consensus = ConsensusConfig(mode=MODE_AUTHORITY, pow_zero_bits=0,
                                        authorities=roster,
                                        block_reward=consensus.block_reward,
                                        finality_depth=consensus.finality_depth)
        self.genesis = GenesisConfig(
            network_id=f"chainfab-sim-{scenario.name}",
            timestamp=scenario.genesis_time,
            consensus=consensus,
            allocations=allocations,
        )
        self.sims: dict[str, _SimNode] = {}
        for spec in scenario.nodes:
            endpoint = f"sim://{spec.name}"
            self.sims[spec.name] = _SimNode(
                spec=spec, endpoint=endpoint, keypair=keys[spec.name],
                data_dir=workdir / "nodes" / spec.name)

    # --- plumbing -----------------------------------------------------------

    def now_s(self) -> int:
        return self.scenario.genesis_time + self.now_ms // 1000

    def _push(self, at_ms: int, kind: str, data: dict) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (at_ms, self._seq, kind, data))

    def _name_of(self, endpoint: str) -> Optional[str]:
        if endpoint.startswith("sim://"):
            name = endpoint[len("sim://"):]
            if name in self.sims:
                return name
        return None

    def _blocked(self, a: str, b: str) -> bool:
        if self.partition is None:
            return False
        return self.partition.get(a) != self.partition.get(b)

    def cast(self, src: str, dest: str, data: bytes) -> bool:
        self.stats["sent"] += 1
        src_name, dest_name = self._name_of(src), self._name_of(dest)
        if dest_name is None or not self.sims[dest_name].alive:
            self.stats["refused"] += 1
            self.trace.append([self.now_ms, src, dest, "refused", len(data)])
            return False
        if src_name is not None and self._blocked(src_name, dest_name):
            self.stats["refused"] += 1
            self.trace.append([self.now_ms, src, dest, "blocked", len(data)])
            return False
        if self.scenario.network.drop_probability > 0 and (
                self.rng.random() < self.scenario.network.drop_probability):
            self.stats["dropped"] += 1
            self.trace.append([self.now_ms, src, dest, "dropped", len(data)])
            return True
        lo, hi = self.scenario.network.latency_ms
        latency = self.rng.randint(lo, hi)
        self.trace.append([self.now_ms, src, dest, f"sent+{latency}", len(data)])
        self._push(self.now_ms + latency, "deliver", {"dest": dest_name, "raw": data})
        return True

    # --- node lifecycle -----------------------------------------------------

    def _boot_node(self, name: str, initial: bool) -> None:
        sim = self.sims[name]
        spec = sim.spec
        policy = ProviderPolicy.from_dict(spec.policy) if spec.policy else None
        produce = spec.produce
        if produce is None:
            produce = spec.role != ROLE_OBSERVER
        sim.node = Node(
            genesis=self.genesis,
            keypair=sim.keypair,
            transport=_SimTransport(self, sim.endpoint),
            role=spec.role,
            policy=policy,
            data_dir=sim.data_dir,
            produce_blocks=produce,
            produce_empty=self.scenario.network.produce_empty,
        )
        sim.alive = True
        if produce:
            self._schedule_produce(name)

    def _schedule_produce(self, name: str) -> None:
        interval_ms = self.scenario.network.block_interval * 1000
        jitter = int(interval_ms * (0.5 + self.rng.random()))
        at = self.now_ms + max(1, jitter)
        if at <= self.scenario.duration * 1000:
            self._push(at, "produce", {"node": name})

    def _handshake_all(self, name: str) -> None:
        """Cast Hello from ``name`` to every other node (full-mesh bootstrap)."""
        sim = self.sims[name]
        for other in self.sims.values():
            if other.spec.name != name:
                sim.node.connect(other.endpoint, self.now_s())

    # --- event handlers -----------------------------------------------------

    def _handle_deliver(self, data: dict) -> None:
        sim = self.sims[data["dest"]]
        if not sim.alive or sim.node is None:
            self.stats["dropped"] += 1
            return
        self.stats["delivered"] += 1
        sim.node.on_message(data["raw"], self.now_s())

    def _handle_produce(self, data: dict) -> None:
        sim = self.sims[data["node"]]
        if not sim.alive or sim.node is None:
            return
        sim.node.produce(self.now_s())
        self._schedule_produce(data["node"])

    def _retry(self, action: dict) -> None:
        at = self.now_ms + self.scenario.network.retry_interval * 1000
        if at <= self.scenario.duration * 1000:
            self._push(at, "action", action)
        else:
            self.action_log.append({"at_ms": self.now_ms, "action": action["kind"],
                                    "outcome": "gave-up"})

    def _submit(self, name: str, tx, kind: str) -> bool:
        sim = self.sims[name]
        try:
            sim.node.submit_transaction(tx, self.now_s())
        except SubmitRejected as exc:
            self.action_log.append({"at_ms": self.now_ms, "action": kind,
                                    "outcome": f"rejected:{exc.violation.code}"})
            return False
        self.action_log.append({"at_ms": self.now_ms, "action": kind, "outcome": "submitted"})
        return True

    def _handle_action(self, action: dict) -> None:
        kind = action["kind"]
        if kind in ("submit_request", "accept_best", "confirm_delivery", "transfer",
                    "kill", "restart"):
            sim = self.sims[action["node"]]
            if kind not in ("restart",) and (not sim.alive or sim.node is None):
                self.action_log.append({"at_ms": self.now_ms, "action": kind,
                                        "outcome": "node-down"})
                return

        if kind == "submit_request":
            sim = self.sims[action["node"]]
            tx = make_request(
                sim.keypair,
                product_spec=action["product_spec"],
                process_tag=action["process_tag"],
                due_date=self.now_s() + action["due_in"],
                max_price=action["max_price"],
            )
            self.labels[action["label"]] = tx.id_hex
            self._submit(action["node"], tx, kind)

        elif kind == "accept_best":
            sim = self.sims[action["node"]]
            request_id = self.labels.get(action["request"])
            record = (sim.node.chain.tip_state().requests.get(request_id)
                      if request_id else None)
            if record is None or not record.offers:
                self._retry(action)
                return
            if record.status != "OPEN":
                self.action_log.append({"at_ms": self.now_ms, "action": kind,
                                        "outcome": f"not-open:{record.status}"})
                return
            offer_id = select_offer(record.offers)
            tx = make_acceptance(sim.keypair, request_id, offer_id)
            self._submit(action["node"], tx, kind)

        elif kind == "confirm_delivery":
            sim = self.sims[action["node"]]
            request_id = self.labels.get(action["request"])
            record = (sim.node.chain.tip_state().requests.get(request_id)
                      if request_id else None)
            if record is None or record.status == "OPEN":
                self._retry(action)
                return
            if record.status != "ACCEPTED":
                self.action_log.append({"at_ms": self.now_ms, "action": kind,
                                        "outcome": f"not-accepted:{record.status}"})
                return
            tx = make_confirmation(sim.keypair, request_id)
            self._submit(action["node"], tx, kind)

        elif kind == "transfer":
            sim = self.sims[action["node"]]
            to = action["to"]
            if to in self.sims:
                to = self.sims[to].keypair.address
            tx = make_transfer(sim.keypair, to, action["amount"])
            self._submit(action["node"], tx, kind)

        elif kind == "kill":
            sim = self.sims[action["node"]]
            sim.alive = False
            sim.node.close()
            self.fault_checkpoints.append({
                "at": action["at"], "kind": "kill", "node": action["node"],
                "heights": {n: s.node.chain.height()
                            for n, s in self.sims.items() if s.alive and s.node},
            })
            self.action_log.append({"at_ms": self.now_ms, "action": kind,
                                    "outcome": "killed"})

        elif kind == "restart":
            sim = self.sims[action["node"]]
            if sim.alive:
                self.action_log.append({"at_ms": self.now_ms, "action": kind,
                                        "outcome": "already-up"})
                return
            self._boot_node(action["node"], initial=False)
            self._handshake_all(action["node"])
            self.action_log.append({"at_ms": self.now_ms, "action": kind,
                                    "outcome": "restarted"})

        elif kind == "partition":
            mapping: dict[str, int] = {}
            for gi, group in enumerate(action["groups"]):
                for node_name in group:
                    mapping[node_name] = gi
            self.partition = mapping
            self.action_log.append({"at_ms": self.now_ms, "action": kind,
                                    "outcome": "partitioned"})

        elif kind == "heal":
            self.partition = None
            # refresh handshakes so lagging sides learn the longer chain
            for name, sim in self.sims.items():
                if sim.alive and sim.node is not None:
                    self._handshake_all(name)
            self.action_log.append({"at_ms": self.now_ms, "action": kind,
                                    "outcome": "healed"})

    # --- run ------------------------------------------------------------------

    def run(self) -> dict:
        for i, spec in enumerate(self.scenario.nodes):
            self._boot_node(spec.name, initial=True)
        for i, spec in enumerate(self.scenario.nodes):
            self._push(i, "connect", {"node": spec.name})
        for action in self.scenario.actions:
            self._push(action["at"] * 1000, "action", dict(action))

        while self._heap:
            at_ms, _seq, kind, data = heapq.heappop(self._heap)
            self.now_ms = max(self.now_ms, at_ms)
            if kind == "deliver":
                self._handle_deliver(data)
            elif kind == "produce":
                self._handle_produce(data)
            elif kind == "action":
                self._handle_action(data)
            elif kind == "connect":
                self._handshake_all(data["node"])
        for sim in self.sims.values():
            if sim.node is not None:
                sim.node.close()
        return self._report()

    # --- reporting --------------------------------------------------------------

    def _alive_nodes(self) -> list[_SimNode]:
        return [sim for sim in self.sims.values() if sim.alive and sim.node]

    def _reference(self) -> _SimNode:
        """The live node with the heaviest tip (deterministic tie-break by name)."""
        alive = self._alive_nodes()
        assert alive, "scenario killed every node"
        return max(alive, key=lambda s: (
            s.node.chain.store.cumulative_work[s.node.chain.tip_id()],
            s.spec.name))

    def _converged(self) -> bool:
        """Tips identical, or differing only within the finality window."""
        alive = self._alive_nodes()
        tips = {sim.node.chain.tip_id() for sim in alive}
        if len(tips) <= 1:
            return True
        depth = self.genesis.consensus.finality_depth
        heights = [sim.node.chain.height() for sim in alive]
        if max(heights) - min(heights) > depth:
            return False
        cut = min(heights) - depth
        if cut < 0:
            return False
        anchors = set()
        for sim in alive:
            chain = sim.node.chain.canonical_chain()
            anchors.add(chain[cut])
        return len(anchors) == 1

    def _conservation(self) -> str:
        ref = self._reference().node
        reward = self.genesis.consensus.block_reward
        for bid in ref.chain.canonical_chain():
            state = ref.chain.state_at(bid)
            if state.conservation_gap() != 0:
                return f"fail: gap {state.conservation_gap()} at height {state.height}"
            if state.issued_supply != state.height * reward:
                return f"fail: supply {state.issued_supply} at height {state.height}"
        return "pass"

    def _single_acceptance(self) -> str:
        ref = self._reference().node
        accepted: dict[str, int] = {}
        for bid in ref.chain.canonical_chain():
            for tx in ref.chain.store.get(bid).transactions:
                if tx.kind == "OfferAcceptance":
                    rid = tx.payload["request_id"]
                    accepted[rid] = accepted.get(rid, 0) + 1
        bad = {rid: n for rid, n in accepted.items() if n > 1}
        return "pass" if not bad else f"fail: {bad}"

    def _tamper_check(self) -> str:
        if not self.scenario.tamper_drill:
            return "skipped"
        victim = self.scenario.nodes[0].name
        sim = self.sims[victim]
        journal = sim.data_dir / "chain.jsonl"
        if not journal.exists() or journal.stat().st_size == 0:
            return "fail: no journal to tamper with"
        data = bytearray(journal.read_bytes())
        pos = self.rng.randrange(len(data))
        while data[pos] in (0x0A,):  # keep line structure, corrupt content
            pos = self.rng.randrange(len(data))
        data[pos] ^= 0x01
        journal.write_bytes(bytes(data))
        try:
            Node(genesis=self.genesis, keypair=sim.keypair,
                 transport=_SimTransport(self, sim.endpoint),
                 role=sim.spec.role, data_dir=sim.data_dir)
        except CorruptStoreError:
            return "pass"
        return "fail: tampered journal replayed cleanly"

    def _report(self) -> dict:
        ref = self._reference()
        ref_state = ref.node.chain.tip_state()
        requests = {}
        for label, request_id in self.labels.items():
            record = ref_state.requests.get(request_id)
            if record is None:
                requests[label] = {"request_id": request_id, "status": "unconfirmed"}
                continue
            price = provider = None
            if record.accepted_offer is not None:
                entry = record.offers[record.accepted_offer]
                price, provider = entry.quoted_price, entry.provider
            requests[label] = {
                "request_id": request_id,
                "status": record.status,
                "accepted_price": price,
                "provider": provider,
                "customer": record.customer,
                "customer_balance": ref_state.balance(record.customer),
                "escrow": record.escrow,
                "offer_count": len(record.offers),
            }
        delivered = self.stats["delivered"]
        report = {
            "scenario": self.scenario.name,
            "seed": self.scenario.seed,
            "duration": self.scenario.duration,
            "end_ms": self.now_ms,
            "nodes": {
                name: {
                    "alive": sim.alive,
                    "address": sim.keypair.address,
                    "height": sim.node.chain.height() if sim.node else None,
                    "tip": sim.node.chain.tip_id() if sim.node else None,
                    "state_hash": (sim.node.chain.tip_state().state_hash().hex()
                                   if sim.node else None),
                    "balance": (ref_state.balance(sim.keypair.address)),
                }
                for name, sim in self.sims.items()
            },
            "converged": self._converged(),
            "requests": requests,
            "messages": {
                "sent": self.stats["sent"],
                "delivered": delivered,
                "dropped": self.stats["dropped"],
                "refused": self.stats["refused"],
            },
            "fault_checkpoints": self.fault_checkpoints,
            "actions": self.action_log,
            "invariants": {
                "conservation": self._conservation(),
                "single_acceptance": self._single_acceptance(),
                "convergence": "pass" if self._converged() else "fail: tips diverge",
                "tamper_drill": self._tamper_check(),
            },
            "trace_digest": hash_canonical(self.trace).hex(),
        }
        return report


def run_scenario(scenario: Scenario, workdir: Optional[str | Path] = None) -> dict:
    """Execute a scenario and return its report (reproducible per seed)."""
    if workdir is not None:
        return SimEngine(scenario, Path(workdir)).run()
    with tempfile.TemporaryDirectory(prefix="chainfab-sim-") as tmp:
        return SimEngine(scenario, Path(tmp)).run()


def check_invariants(report: dict, scenario: Scenario) -> list[str]:
    """Violations recorded in a completed run's report; empty means pass."""
    violations = []
    for name, result in report.get("invariants", {}).items():
        if result not in ("pass", "skipped"):
            violations.append(f"{name}: {result}")
    if not report.get("converged", False):
        if "convergence: fail: tips diverge" not in violations:
            violations.append("convergence: tips diverge")
    for name, info in report.get("nodes", {}).items():
        if info["alive"] and info.get("balance", 0) < 0:
            violations.append(f"negative balance on {name}")
    return violations
