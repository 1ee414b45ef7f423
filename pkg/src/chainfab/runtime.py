"""Live-node runtime: one writer thread, command queue, timers, transport pump.

P2P frames, API handlers, and the production timer never touch the Node
directly; they enqueue closures that the single worker thread runs in order.
That is the whole concurrency story: the Node itself stays single-threaded.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from typing import Any, Callable, Optional

from .node import Node
from .transport import TcpTransport

log = logging.getLogger("chainfab.runtime")

Command = Callable[[Node, int], Any]


class _Call:
    __slots__ = ("fn", "event", "result", "error")

    def __init__(self, fn: Command):
        self.fn = fn
        self.event = threading.Event()
        self.result: Any = None
        self.error: Optional[BaseException] = None


class NodeRuntime:
    def __init__(self, node: Node, transport: TcpTransport, *,
                 block_interval: float = 5.0,
                 bootstrap: tuple[str, ...] = (),
                 sync_grace: float = 5.0,
                 bootstrap_retry: float = 2.0):
        self.node = node
        self.transport = transport
        self.block_interval = block_interval
        self.bootstrap = tuple(bootstrap)
        self.sync_grace = sync_grace
        self.bootstrap_retry = bootstrap_retry
        self._queue: "queue.Queue[Optional[_Call]]" = queue.Queue()
        self._worker: Optional[threading.Thread] = None
        self._producer: Optional[threading.Thread] = None
        self._bootstrapper: Optional[threading.Thread] = None
        self._stop = threading.Event()

    # --- command plumbing --------------------------------------------------

    def post(self, fn: Command) -> None:
        """Fire-and-forget enqueue (used by the transport pump and timers)."""
        self._queue.put(_Call(fn))

    def execute(self, fn: Command) -> Any:
        """Run ``fn(node, now)`` on the worker thread and return its result."""
        call = _Call(fn)
        self._queue.put(call)
        call.event.wait()
        if call.error is not None:
            raise call.error
        return call.result

    def _work_loop(self) -> None:
        while True:
            call = self._queue.get()
            if call is None:
                return
            try:
                call.result = call.fn(self.node, int(time.time()))
            except BaseException as exc:  # surfaced to execute() callers
                call.error = exc
            finally:
                call.event.set()

    def _produce_loop(self) -> None:
        while not self._stop.wait(self.block_interval):
            self.post(lambda node, now: node.produce(now))

    def _bootstrap_loop(self) -> None:
        # peers may not be listening yet at startup (or may drop later):
        # keep re-introducing ourselves to any bootstrap endpoint we have
        # no handshaked peer behind
        def reconnect(node: Node, now: int) -> None:
            known = {info.endpoint for info in node.peers.entries()}
            for endpoint in self.bootstrap:
                if endpoint not in known:
                    node.connect(endpoint, now)

        self.post(reconnect)
        while not self._stop.wait(self.bootstrap_retry):
            self.post(reconnect)

    # --- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        self.transport.on_frame = lambda raw: self.post(
            lambda node, now: node.on_message(raw, now))
        self.transport.start()
        self._worker = threading.Thread(target=self._work_loop,
                                        name="node-worker", daemon=True)
        self._worker.start()
        if self.bootstrap:
            self.node.synced = False
            self._bootstrapper = threading.Thread(target=self._bootstrap_loop,
                                                  name="node-bootstrap",
                                                  daemon=True)
            self._bootstrapper.start()
            # a lonely or already-current node must not stay "not synced" forever
            threading.Timer(self.sync_grace, lambda: self.post(
                lambda node, now: setattr(node, "synced", True))).start()
        if self.node.produce_blocks:
            self._producer = threading.Thread(target=self._produce_loop,
                                              name="node-producer", daemon=True)
            self._producer.start()

    def stop(self) -> None:
        self._stop.set()
        if self._producer is not None:
            self._producer.join(timeout=2)
        if self._bootstrapper is not None:
            self._bootstrapper.join(timeout=2)
        self._queue.put(None)
        if self._worker is not None:
            self._worker.join(timeout=5)
        self.transport.stop()
        self.node.close()
