"""Server-side state: the ciphertext search tree and the encoding table.

Ordertexts are strings over {0,1} of a fixed width W: the root-to-node path
followed by a "1" and zero padding. A node can therefore sit at depth at most
W-1; an insert that would go deeper raises :class:`DepthExceeded`, which the
protocol layer turns into a full rebuild to minimal height (rebalance). A
bit-packed variant (W divisible by 8, packed big-endian) is available for
dense storage; packed byte strings sort identically to the bit strings.
"""

from __future__ import annotations

import bisect

from ..errors import ArgumentError, MaskdbError

DEFAULT_WIDTH = 16


class DepthExceeded(MaskdbError):
    """Insertion path would be longer than width-1; a rebalance is needed."""


def encode_path(path: str, width: int) -> str:
    """Encode a tree path as the fixed-width ordertext path ‖ "1" ‖ "0"*."""
    if any(c not in "01" for c in path):
        raise ArgumentError(f"path must be over {{0,1}}, got {path!r}")
    if len(path) > width - 1:
        raise DepthExceeded(f"path length {len(path)} exceeds width-1 = {width - 1}")
    return path + "1" + "0" * (width - 1 - len(path))


def pack_ordertext(bits: str) -> bytes:
    """Pack an ordertext into bytes (width must be a multiple of 8)."""
    if len(bits) % 8 != 0:
        raise ArgumentError(f"width {len(bits)} is not a multiple of 8")
    if any(c not in "01" for c in bits):
        raise ArgumentError("ordertext must be a string over {0,1}")
    return int(bits, 2).to_bytes(len(bits) // 8, "big")


def unpack_ordertext(raw: bytes, width: int) -> str:
    if len(raw) * 8 != width:
        raise ArgumentError(f"{len(raw)} bytes do not hold a width-{width} ordertext")
    return format(int.from_bytes(raw, "big"), f"0{width}b")


class _Node:
    __slots__ = ("ct", "left", "right")

    def __init__(self, ct: str):
        self.ct = ct
        self.left: _Node | None = None
        self.right: _Node | None = None


class OpeTree:
    """Binary search tree of ciphertexts plus the ciphertext→ordertext table.

    The tree itself never compares ciphertexts: ordering decisions are made
    by the client during the interactive descent, so this structure only
    records shape. In-order traversal is plaintext-sorted by construction.
    """

    def __init__(self, width: int = DEFAULT_WIDTH):
        if width < 2:
            raise ArgumentError("width must be >= 2")
        self.width = width
        self.root: _Node | None = None
        self.table: dict[str, str] = {}
        self._sorted: list[tuple[str, str]] = []  # (ordertext, ciphertext), ascending

    def __len__(self) -> int:
        return len(self.table)

    def __contains__(self, ct: str) -> bool:
        return ct in self.table

    def lookup(self, ct: str) -> str | None:
        return self.table.get(ct)

    def depth(self) -> int:
        """Path length of the deepest node (-1 for an empty tree)."""
        def walk(node: _Node | None) -> int:
            if node is None:
                return -1
            return 1 + max(walk(node.left), walk(node.right))
        return walk(self.root)

    def in_order(self) -> list[str]:
        """Ciphertexts in tree order (equals plaintext order)."""
        return [ct for _, ct in self._sorted]

    def attach(self, parent: _Node | None, direction: str, ct: str, path: str) -> str:
        """Create a node at the empty slot described by (parent, direction).

        Raises DepthExceeded without modifying anything if the slot is too
        deep for the configured width.
        """
        bits = encode_path(path, self.width)
        node = _Node(ct)
        if parent is None:
            if self.root is not None:
                raise ArgumentError("root slot is occupied")
            self.root = node
        elif direction == "0":
            if parent.left is not None:
                raise ArgumentError("left slot is occupied")
            parent.left = node
        else:
            if parent.right is not None:
                raise ArgumentError("right slot is occupied")
            parent.right = node
        self.table[ct] = bits
        bisect.insort(self._sorted, (bits, ct))
        return bits

    def range_search(self, lo: str, hi: str) -> list[str]:
        """Ciphertexts whose ordertext t satisfies lo <= t <= hi, ascending."""
        if lo > hi:
            raise ArgumentError(f"range lower bound {lo!r} above upper bound {hi!r}")
        i = bisect.bisect_left(self._sorted, (lo,))
        j = bisect.bisect_right(self._sorted, (hi, "￿"))
        return [ct for _, ct in self._sorted[i:j]]

    def min_height(self) -> int:
        """Height of a minimal tree holding the current entries."""
        n = len(self)
        return n.bit_length() - 1 if n else -1

    def fits_after_rebalance(self) -> bool:
        """Whether one more entry is guaranteed to fit once rebuilt."""
        return len(self).bit_length() <= self.width - 1

    def rebalance(self) -> dict[str, str]:
        """Rebuild to minimal height; returns the total old→new ordertext map."""
        seq = self.in_order()
        old = dict(self.table)

        def build(lo: int, hi: int) -> _Node | None:
            if lo > hi:
                return None
            mid = (lo + hi) // 2
            node = _Node(seq[mid])
            node.left = build(lo, mid - 1)
            node.right = build(mid + 1, hi)
            return node

        self.root = build(0, len(seq) - 1)
        self.table = {}

        def assign(node: _Node | None, path: str) -> None:
            if node is None:
                return
            self.table[node.ct] = encode_path(path, self.width)
            assign(node.left, path + "0")
            assign(node.right, path + "1")

        assign(self.root, "")
        self._sorted = sorted((bits, ct) for ct, bits in self.table.items())
        return {old_bits: self.table[ct] for ct, old_bits in old.items()}

    def to_dict(self) -> dict:
        def dump(node: _Node | None):
            if node is None:
                return None
            return [node.ct, dump(node.left), dump(node.right)]
        return {"width": self.width, "tree": dump(self.root)}

    @classmethod
    def from_dict(cls, data: dict) -> "OpeTree":
        tree = cls(width=int(data["width"]))

        def load(spec, parent: _Node | None, direction: str, path: str) -> None:
            if spec is None:
                return
            ct, left, right = spec
            node_path = path
            tree.attach(parent, direction, ct, node_path)
            node = tree.root if parent is None else (parent.left if direction == "0" else parent.right)
            load(left, node, "0", node_path + "0")
            load(right, node, "1", node_path + "1")

        load(data.get("tree"), None, "", "")
        return tree
