"""Trusted-client side of the order-preserving encoding protocol.

The session owns the key material. During an insert it decrypts each node
ciphertext the server cursors through, compares against the value being
inserted (byte-wise over the UTF-8 encoding) and answers with a direction.
Decryptions are memoized per ciphertext: ciphertexts never change, even
across rebalances, so the cache stays valid for the life of the session.
"""

from __future__ import annotations

from typing import Callable

from ..errors import (
    ArgumentError,
    CapacityError,
    NotFound,
    ProtocolError,
    UnmaskError,
)
from ..masking import KeyMaterial, mask_det, unmask_det
from .protocol import (
    E_ARGUMENT,
    E_CAPACITY,
    E_NOT_FOUND,
    PROTOCOL_VERSION,
    format_frame,
    parse_frame,
)

_MAX_INSERT_ATTEMPTS = 4


class OpeSession:
    """One client session against one OPE tree.

    ``on_remap`` is invoked with the complete {old: new} ordertext map every
    time the server rebalances, so the caller can rewrite any stored
    ordertexts (see ``TripleStore.apply_remap``). At most one insertion is in
    flight per session; the protocol is strictly request-response.
    """

    def __init__(self, transport, key: KeyMaterial,
                 on_remap: Callable[[dict[str, str]], None] | None = None):
        self._t = transport
        self._key = key
        self.on_remap = on_remap
        self._memo: dict[str, bytes] = {}
        self._closed = False
        self._t.send(format_frame("HELLO", PROTOCOL_VERSION))

    # -- helpers -----------------------------------------------------------

    def ciphertext(self, plaintext: str) -> str:
        """The DET ciphertext the tree stores for this plaintext."""
        return mask_det(plaintext, self._key).payload

    def _decrypt(self, ct: str) -> bytes:
        data = self._memo.get(ct)
        if data is None:
            data = unmask_det(ct, self._key).encode("utf-8")
            self._memo[ct] = data
        return data

    def _request(self, frame: str) -> list[str]:
        self._t.send(frame)
        return parse_frame(self._t.recv())

    def _raise_err(self, fields: list[str]) -> None:
        code = fields[1] if len(fields) > 1 else "?"
        message = fields[2] if len(fields) > 2 else ""
        if code == E_NOT_FOUND:
            raise NotFound(message)
        if code == E_ARGUMENT:
            raise ArgumentError(message)
        if code == E_CAPACITY:
            raise CapacityError(message)
        raise ProtocolError(f"server error {code}: {message}")

    def _consume_remap(self) -> dict[str, str]:
        remap: dict[str, str] = {}
        while True:
            fields = parse_frame(self._t.recv())
            if fields[0] == "REMAP":
                remap[fields[1]] = fields[2]
            elif fields[0] == "REMAP_END":
                return remap
            else:
                raise ProtocolError(f"unexpected frame {fields[0]} inside remap stream")

    # -- operations --------------------------------------------------------

    def insert(self, plaintext: str) -> str:
        """Insert a value (or find it) and return its current ordertext."""
        target = plaintext.encode("utf-8")
        ct = self.ciphertext(plaintext)
        for _ in range(_MAX_INSERT_ATTEMPTS):
            fields = self._request("INSERT_BEGIN")
            while True:
                kind = fields[0]
                if kind == "NODE":
                    node_ct = fields[1]
                    if node_ct == ct:
                        fields = self._request(format_frame("PUT", ct))
                        if fields[0] == "FOUND":
                            return fields[1]
                        self._raise_err(fields)
                    node_pt = self._decrypt(node_ct)
                    if target == node_pt:
                        # same plaintext but different ciphertext: the tree
                        # was built under different key material
                        raise ProtocolError("tree node decrypts to the inserted value under a "
                                            "different ciphertext; key mismatch with this tree")
                    direction = "0" if target < node_pt else "1"
                    fields = self._request(format_frame("DIR", direction))
                elif kind == "EMPTY":
                    fields = self._request(format_frame("PUT", ct))
                    if fields[0] == "OK":
                        return fields[1]
                    if fields[0] == "REMAP_BEGIN":
                        remap = self._consume_remap()
                        if self.on_remap:
                            self.on_remap(remap)
                        break  # descent restarts against the rebuilt tree
                    self._raise_err(fields)
                elif kind == "ERR":
                    self._raise_err(fields)
                else:
                    raise ProtocolError(f"unexpected frame {kind} during insert")
        raise CapacityError(f"insert of {plaintext!r} did not fit after "
                            f"{_MAX_INSERT_ATTEMPTS - 1} rebalances")

    def lookup_ciphertext(self, ct: str) -> str:
        fields = self._request(format_frame("LOOKUP", ct))
        if fields[0] == "FOUND":
            return fields[1]
        self._raise_err(fields)
        raise AssertionError("unreachable")

    def lookup(self, plaintext: str) -> str:
        """Ordertext of a previously inserted value; NotFound otherwise."""
        return self.lookup_ciphertext(self.ciphertext(plaintext))

    def contains(self, plaintext: str) -> bool:
        try:
            self.lookup(plaintext)
            return True
        except NotFound:
            return False

    def range_ciphertexts(self, lo: str, hi: str) -> list[str]:
        """Ciphertexts with ordertext in [lo, hi], in ascending order."""
        self._t.send(format_frame("RANGE", lo, hi))
        items: list[str] = []
        while True:
            fields = parse_frame(self._t.recv())
            if fields[0] == "RANGE_ITEM":
                items.append(fields[1])
            elif fields[0] == "RANGE_END":
                return items
            elif fields[0] == "ERR":
                self._raise_err(fields)
            else:
                raise ProtocolError(f"unexpected frame {fields[0]} in range reply")

    def range_plaintexts(self, lo: str, hi: str) -> list[str]:
        return [self._decrypt(ct).decode("utf-8") for ct in self.range_ciphertexts(lo, hi)]

    def reverse_lookup(self, bits: str) -> str:
        """Plaintext behind a single ordertext (used by unmask)."""
        items = self.range_ciphertexts(bits, bits)
        if not items:
            raise UnmaskError(f"no tree entry for ordertext {bits}")
        return self._decrypt(items[0]).decode("utf-8")

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            try:
                self._t.send("BYE")
            except Exception:
                pass
            self._t.close()

    def __enter__(self) -> "OpeSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
