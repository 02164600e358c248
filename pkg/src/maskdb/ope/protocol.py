"""Wire protocol and the server-side session state machine.

Frames are newline-delimited UTF-8 lines with tab-separated fields; binary
fields travel as Base64, ordertexts as their bit strings.

    client→server:  HELLO <version> | INSERT_BEGIN | DIR <0|1> | PUT <ct>
                    | LOOKUP <ct> | RANGE <lo> <hi> | BYE
    server→client:  NODE <ct> | EMPTY | OK <bits> | FOUND <bits>
                    | RANGE_ITEM <ct> | RANGE_END
                    | REMAP_BEGIN | REMAP <old> <new> | REMAP_END
                    | ERR <code> <message>

A successful HELLO gets no acknowledgement (the client may pipeline); a
version mismatch gets ERR VERSION and the session closes. Insertion is an
exchange: the server cursors from the root sending NODE frames, the client
answers DIR until the server reports EMPTY, then PUT attaches the ciphertext
and OK carries its ordertext. PUT at a non-empty cursor whose ciphertext
equals the one being inserted answers FOUND with the existing ordertext (the
client detected equality). If the empty slot is too deep, the server rebuilds
the tree to minimal height and streams the complete old→new ordertext remap
instead of inserting; the client is expected to re-run the insert.

One insertion session holds the tree at a time; lookups and ranges wait for
it to finish. ERR codes VERSION, PROTOCOL and MALFORMED close the session;
NOT_FOUND, ARGUMENT, BUSY and CAPACITY leave it usable.
"""

from __future__ import annotations

import threading

from .tree import DepthExceeded, OpeTree, _Node

PROTOCOL_VERSION = "1"

# error codes
E_VERSION = "VERSION"
E_PROTOCOL = "PROTOCOL"
E_MALFORMED = "MALFORMED"
E_NOT_FOUND = "NOT_FOUND"
E_ARGUMENT = "ARGUMENT"
E_BUSY = "BUSY"
E_CAPACITY = "CAPACITY"

_CLOSING_CODES = {E_VERSION, E_PROTOCOL, E_MALFORMED}


def format_frame(*fields: str) -> str:
    for f in fields:
        if "\t" in f or "\n" in f:
            raise ValueError(f"frame field contains a separator: {f!r}")
    return "\t".join(fields)


def parse_frame(line: str) -> list[str]:
    return line.rstrip("\n").split("\t")


def err_frame(code: str, message: str) -> str:
    return format_frame("ERR", code, message.replace("\t", " ").replace("\n", " "))


class OpeServerState:
    """Shared server state: the tree plus the single-writer insert lock.

    ``insert_timeout`` bounds how long a session waits to become the writer
    (or a read waits for a writer to finish) before answering ERR BUSY; the
    in-process loopback uses 0 so a second writer fails fast instead of
    deadlocking its own thread.
    """

    def __init__(self, tree: OpeTree | None = None, width: int | None = None,
                 insert_timeout: float = 30.0):
        if tree is None:
            tree = OpeTree(width=width) if width else OpeTree()
        self.tree = tree
        self.insert_timeout = insert_timeout
        self._lock = threading.Lock()

    def session(self) -> "OpeServerSession":
        return OpeServerSession(self)

    def rebalance(self) -> dict[str, str]:
        """Rebuild the tree to minimal height; returns the ordertext remap.

        Blocks until any in-flight insertion finishes.
        """
        with self._lock:
            return self.tree.rebalance()

    def _acquire(self) -> bool:
        return self._lock.acquire(timeout=self.insert_timeout) if self.insert_timeout > 0 \
            else self._lock.acquire(blocking=False)

    def _release(self) -> None:
        self._lock.release()


class OpeServerSession:
    """Per-connection state machine; feed it frames, get response frames."""

    def __init__(self, state: OpeServerState):
        self._state = state
        self._tree = state.tree
        self._phase = "hello"  # hello -> ready -> insert
        self._writing = False
        self.closed = False
        # descent cursor: either at a node, or at the empty slot under
        # (_parent, _dir); _path is the bit path to the cursor position
        self._node: _Node | None = None
        self._parent: _Node | None = None
        self._dir = ""
        self._path = ""

    def close(self) -> None:
        """Release any held lock; called on disconnect as well as errors."""
        if self._writing:
            self._state._release()
            self._writing = False
        self.closed = True

    def handle_line(self, line: str) -> list[str]:
        if self.closed:
            return [err_frame(E_PROTOCOL, "session is closed")]
        fields = parse_frame(line)
        cmd, args = fields[0], fields[1:]
        try:
            handler = getattr(self, f"_cmd_{cmd.lower()}", None)
            if handler is None or not cmd:
                return self._fail(E_MALFORMED, f"unknown command {cmd!r}")
            return handler(args)
        except Exception as e:  # defensive: a bug must not kill the server
            return self._fail(E_PROTOCOL, f"internal error: {e}")

    def _fail(self, code: str, message: str) -> list[str]:
        if code in _CLOSING_CODES:
            self._end_insert()
            self.closed = True
        return [err_frame(code, message)]

    def _end_insert(self) -> None:
        if self._writing:
            self._state._release()
            self._writing = False
        self._phase = "ready" if self._phase != "hello" else self._phase
        self._node = self._parent = None
        self._dir = self._path = ""

    def _cmd_hello(self, args: list[str]) -> list[str]:
        if self._phase != "hello":
            return self._fail(E_PROTOCOL, "HELLO already exchanged")
        if len(args) != 1:
            return self._fail(E_MALFORMED, "HELLO takes one field")
        if args[0] != PROTOCOL_VERSION:
            return self._fail(E_VERSION, f"server speaks version {PROTOCOL_VERSION}")
        self._phase = "ready"
        return []

    def _cmd_insert_begin(self, args: list[str]) -> list[str]:
        if self._phase == "hello":
            return self._fail(E_PROTOCOL, "HELLO required first")
        if self._phase == "insert":
            return self._fail(E_PROTOCOL, "insertion already in progress on this session")
        if args:
            return self._fail(E_MALFORMED, "INSERT_BEGIN takes no fields")
        if not self._state._acquire():
            return [err_frame(E_BUSY, "another insertion holds the tree")]
        self._writing = True
        self._phase = "insert"
        self._path = ""
        self._parent, self._dir = None, ""
        self._node = self._tree.root
        if self._node is None:
            return ["EMPTY"]
        return [format_frame("NODE", self._node.ct)]

    def _cmd_dir(self, args: list[str]) -> list[str]:
        if self._phase != "insert":
            return self._fail(E_PROTOCOL, "DIR outside of insertion")
        if len(args) != 1 or args[0] not in ("0", "1"):
            return self._fail(E_MALFORMED, "DIR takes a single 0 or 1")
        if self._node is None:
            return self._fail(E_PROTOCOL, "cursor is already at an empty slot")
        direction = args[0]
        self._parent, self._dir = self._node, direction
        self._path += direction
        self._node = self._node.left if direction == "0" else self._node.right
        if self._node is None:
            return ["EMPTY"]
        return [format_frame("NODE", self._node.ct)]

    def _cmd_put(self, args: list[str]) -> list[str]:
        if self._phase != "insert":
            return self._fail(E_PROTOCOL, "PUT outside of insertion")
        if len(args) != 1 or not args[0]:
            return self._fail(E_MALFORMED, "PUT takes one ciphertext field")
        ct = args[0]
        if self._node is not None:
            # cursor on an occupied node: only valid as the equality case
            if self._node.ct == ct:
                bits = self._tree.table[ct]
                self._end_insert()
                return [format_frame("FOUND", bits)]
            return self._fail(E_PROTOCOL, "PUT at an occupied node with a different ciphertext")
        if ct in self._tree:
            return self._fail(E_PROTOCOL, "ciphertext already present elsewhere in the tree")
        try:
            bits = self._tree.attach(self._parent, self._dir, ct, self._path)
        except DepthExceeded:
            if not self._tree.fits_after_rebalance():
                self._end_insert()
                return [err_frame(E_CAPACITY,
                                  f"tree of {len(self._tree)} entries is full at width {self._tree.width}")]
            remap = self._tree.rebalance()
            self._end_insert()
            frames = ["REMAP_BEGIN"]
            frames.extend(format_frame("REMAP", old, new) for old, new in sorted(remap.items()))
            frames.append("REMAP_END")
            return frames
        self._end_insert()
        return [format_frame("OK", bits)]

    def _read_guarded(self, fn) -> list[str]:
        # reads are excluded while an insertion holds the tree
        if not self._state._acquire():
            return [err_frame(E_BUSY, "tree is held by an insertion")]
        try:
            return fn()
        finally:
            self._state._release()

    def _cmd_lookup(self, args: list[str]) -> list[str]:
        if self._phase == "hello":
            return self._fail(E_PROTOCOL, "HELLO required first")
        if self._phase == "insert":
            return self._fail(E_PROTOCOL, "LOOKUP during insertion")
        if len(args) != 1 or not args[0]:
            return self._fail(E_MALFORMED, "LOOKUP takes one ciphertext field")

        def run():
            bits = self._tree.lookup(args[0])
            if bits is None:
                return [err_frame(E_NOT_FOUND, "ciphertext not in tree")]
            return [format_frame("FOUND", bits)]

        return self._read_guarded(run)

    def _cmd_range(self, args: list[str]) -> list[str]:
        if self._phase == "hello":
            return self._fail(E_PROTOCOL, "HELLO required first")
        if self._phase == "insert":
            return self._fail(E_PROTOCOL, "RANGE during insertion")
        if len(args) != 2:
            return self._fail(E_MALFORMED, "RANGE takes lo and hi")
        lo, hi = args
        width = self._tree.width
        for bound in (lo, hi):
            if len(bound) != width or any(c not in "01" for c in bound):
                return [err_frame(E_ARGUMENT, f"bound must be {width} bits over 0/1")]
        if lo > hi:
            return [err_frame(E_ARGUMENT, "lower bound sorts above upper bound")]

        def run():
            frames = [format_frame("RANGE_ITEM", ct) for ct in self._tree.range_search(lo, hi)]
            frames.append("RANGE_END")
            return frames

        return self._read_guarded(run)

    def _cmd_bye(self, args: list[str]) -> list[str]:
        self._end_insert()
        self.closed = True
        return []
