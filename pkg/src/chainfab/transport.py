"""TCP transport: one length-prefixed frame per connection, cast-and-close.

Wire format (docs/wire.md): 4-byte big-endian payload length, then the
canonical-JSON NetMessage.  Every cast dials, writes one frame, and closes;
inbound connections are read once and handed to the runtime.  TCP gives the
in-order-per-connection guarantee; the protocol never needs more.
"""

from __future__ import annotations

import logging
import socket
import threading
from typing import Callable, Optional

from .p2p import MAX_FRAME

log = logging.getLogger("chainfab.transport")

DIAL_TIMEOUT = 3.0
READ_TIMEOUT = 10.0


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    return host, int(port)


class TcpTransport:
    """Listens for frames and casts frames; delivery goes to ``on_frame``."""

    def __init__(self, listen: str = "127.0.0.1:7771",
                 advertise: Optional[str] = None):
        host, port = parse_endpoint(listen)
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind((host, port))
        self._server.listen(32)
        bound_port = self._server.getsockname()[1]
        self._local = advertise or f"{host}:{bound_port}"
        self.on_frame: Optional[Callable[[bytes], None]] = None
        self._accept_thread: Optional[threading.Thread] = None
        self._running = False

    @property
    def local(self) -> str:
        return self._local

    def start(self) -> None:
        self._running = True
        self._accept_thread = threading.Thread(target=self._accept_loop,
                                               name=f"p2p-accept-{self._local}",
                                               daemon=True)
        self._accept_thread.start()

    def stop(self) -> None:
        self._running = False
        try:
            self._server.close()
        except OSError:
            pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=2)

    def _accept_loop(self) -> None:
        while self._running:
            try:
                conn, _addr = self._server.accept()
            except OSError:
                return  # listener closed
            threading.Thread(target=self._read_one, args=(conn,), daemon=True).start()

    def _read_one(self, conn: socket.socket) -> None:
        try:
            conn.settimeout(READ_TIMEOUT)
            header = self._read_exact(conn, 4)
            if header is None:
                return
            length = int.from_bytes(header, "big")
            if length > MAX_FRAME:
                log.warning("oversized frame (%d bytes) dropped", length)
                return
            payload = self._read_exact(conn, length)
            if payload is None:
                return
            if self.on_frame is not None:
                self.on_frame(payload)
        except OSError:
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass

    @staticmethod
    def _read_exact(conn: socket.socket, n: int) -> Optional[bytes]:
        buf = b""
        while len(buf) < n:
            chunk = conn.recv(n - len(buf))
            if not chunk:
                return None
            buf += chunk
        return buf

    def cast(self, endpoint: str, data: bytes) -> bool:
        try:
            host, port = parse_endpoint(endpoint)
            with socket.create_connection((host, port), timeout=DIAL_TIMEOUT) as conn:
                conn.sendall(len(data).to_bytes(4, "big") + data)
            return True
        except (OSError, ValueError):
            return False
