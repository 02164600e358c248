"""Mutable order-preserving encoding.

An untrusted server holds a binary search tree of DET ciphertexts; a trusted
client drives insertion interactively by decrypting the node the server is
cursored on and answering 0 (left) or 1 (right). The encoding of a value is
the fixed-width bit string path ‖ "1" ‖ "0"* to its node, so lexicographic
order on encodings equals plaintext order. The server never sees plaintext:
only ciphertexts, directions and encodings cross the wire.
"""

from .client import OpeSession
from .protocol import PROTOCOL_VERSION, OpeServerState
from .server import OpeServer, load_state, save_state
from .transport import LoopbackTransport, SocketTransport, WireTap
from .tree import DepthExceeded, OpeTree, encode_path, pack_ordertext, unpack_ordertext

__all__ = [
    "DepthExceeded",
    "LoopbackTransport",
    "OpeServer",
    "OpeServerState",
    "OpeSession",
    "OpeTree",
    "PROTOCOL_VERSION",
    "SocketTransport",
    "WireTap",
    "encode_path",
    "load_state",
    "pack_ordertext",
    "save_state",
    "unpack_ordertext",
]
