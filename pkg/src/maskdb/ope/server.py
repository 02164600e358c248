"""TCP front end for the tree server, with on-disk persistence.

The server is key-blind. To stop an operator from accidentally serving a
tree built under a different password, the state file can carry an opaque
key-check token (clients derive it from their key with ``maskdb ope-token``);
the server only compares it for equality at load time.
"""

from __future__ import annotations

import base64
import json
import logging
import socketserver
import threading
from pathlib import Path

from ..errors import ConfigError, LoadError
from ..masking import KeyMaterial, hmac_tag
from .protocol import OpeServerState
from .tree import OpeTree

logger = logging.getLogger(__name__)

KEY_TOKEN_CONTEXT = b"maskdb-ope-key-check-v1"
STATE_VERSION = 1


def key_check_token(key: KeyMaterial) -> str:
    """Opaque fingerprint of key material; reveals nothing about the key."""
    return base64.b64encode(hmac_tag(key.key_bytes, KEY_TOKEN_CONTEXT, "sha256")).decode("ascii")


def save_state(state: OpeServerState, path: str | Path, key_token: str | None = None) -> None:
    doc = {"version": STATE_VERSION, "key_token": key_token, **state.tree.to_dict()}
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_state(path: str | Path, key_token: str | None = None,
               insert_timeout: float = 30.0) -> OpeServerState:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise LoadError(f"corrupt tree state file {path}: {e}") from e
    if doc.get("version") != STATE_VERSION:
        raise LoadError(f"unsupported tree state version {doc.get('version')!r}")
    stored = doc.get("key_token")
    if key_token is not None and stored is not None and stored != key_token:
        raise ConfigError("tree state was built under different key material "
                          "(key-check token mismatch)")
    try:
        tree = OpeTree.from_dict(doc)
    except (KeyError, TypeError, ValueError, RecursionError) as e:
        raise LoadError(f"corrupt tree structure in {path}: {e}") from e
    return OpeServerState(tree=tree, insert_timeout=insert_timeout)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        session = self.server.state.session()  # type: ignore[attr-defined]
        try:
            for raw in self.rfile:
                try:
                    line = raw.decode("utf-8").rstrip("\n")
                except UnicodeDecodeError:
                    break
                for frame in session.handle_line(line):
                    self.wfile.write((frame + "\n").encode("utf-8"))
                self.wfile.flush()
                if session.closed:
                    break
        except (ConnectionError, BrokenPipeError):
            pass
        finally:
            session.close()


class _ThreadingServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class OpeServer:
    """Threaded TCP server around one tree; persists state on stop."""

    def __init__(self, state: OpeServerState, host: str = "127.0.0.1", port: int = 0,
                 persist_path: str | Path | None = None, key_token: str | None = None):
        self.state = state
        self.persist_path = Path(persist_path) if persist_path else None
        self.key_token = key_token
        try:
            self._server = _ThreadingServer((host, port), _Handler)
        except OSError as e:
            raise ConfigError(f"cannot bind {host}:{port}: {e}") from e
        self._server.state = state  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def host(self) -> str:
        return self._server.server_address[0]

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name="ope-server", daemon=True)
        self._thread.start()
        logger.info("OPE server listening on %s:%d (width %d, %d entries)",
                    self.host, self.port, self.state.tree.width, len(self.state.tree))

    def serve_forever(self) -> None:
        logger.info("OPE server listening on %s:%d", self.host, self.port)
        try:
            self._server.serve_forever()
        finally:
            self._persist()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)
        self._persist()

    def _persist(self) -> None:
        if self.persist_path is not None:
            save_state(self.state, self.persist_path, self.key_token)
            logger.info("persisted %d tree entries to %s", len(self.state.tree), self.persist_path)

    def __enter__(self) -> "OpeServer":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()
