"""Client transports: in-process loopback and TCP socket.

Both speak exactly the frame grammar from :mod:`.protocol`; the loopback
exists so protocol-level tests need no network. A :class:`WireTap` can be
attached to either to record every frame that crosses, which is how the
server-blindness checks capture traffic.
"""

from __future__ import annotations

import socket
from collections import deque

from ..errors import ProtocolError
from .protocol import OpeServerState


class WireTap:
    """Records (direction, frame) pairs; direction is 'C' or 'S'."""

    def __init__(self):
        self.frames: list[tuple[str, str]] = []

    def record(self, direction: str, frame: str) -> None:
        self.frames.append((direction, frame))

    def all_text(self) -> str:
        return "\n".join(frame for _, frame in self.frames)


class LoopbackTransport:
    """Drives a server session by direct call, queueing its responses."""

    def __init__(self, state: OpeServerState, tap: WireTap | None = None):
        self._session = state.session()
        self._pending: deque[str] = deque()
        self.tap = tap

    def send(self, frame: str) -> None:
        if self.tap:
            self.tap.record("C", frame)
        responses = self._session.handle_line(frame)
        if self.tap:
            for r in responses:
                self.tap.record("S", r)
        self._pending.extend(responses)

    def recv(self) -> str:
        if not self._pending:
            raise ProtocolError("no pending server frame (protocol desync)")
        return self._pending.popleft()

    def close(self) -> None:
        self._session.close()


class SocketTransport:
    """Newline-delimited UTF-8 frames over a TCP connection."""

    def __init__(self, host: str, port: int, tap: WireTap | None = None,
                 timeout: float = 30.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self._sock.makefile("rw", encoding="utf-8", newline="\n")
        self.tap = tap

    def send(self, frame: str) -> None:
        if self.tap:
            self.tap.record("C", frame)
        self._file.write(frame + "\n")
        self._file.flush()

    def recv(self) -> str:
        line = self._file.readline()
        if not line:
            raise ProtocolError("connection closed by server")
        frame = line.rstrip("\n")
        if self.tap:
            self.tap.record("S", frame)
        return frame

    def close(self) -> None:
        try:
            self._file.close()
        finally:
            self._sock.close()
