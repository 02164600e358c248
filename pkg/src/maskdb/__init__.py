"""maskdb: compute on masked data.

Sparse associative arrays whose rows, columns and values are masked under
selectable schemes (CLR, RND, DET, OPE, AUT), an embedded sorted triple
store, and correlation/threshold kernels that operate directly on the
masked representation so an untrusted server never sees plaintext.
"""

from .errors import (
    ArgumentError,
    CapacityError,
    ConfigError,
    CryptoError,
    FormatError,
    IntegrityError,
    LoadError,
    MaskdbError,
    NotFound,
    ProtocolError,
    RemapError,
    SchemaError,
    StoreError,
    UnmaskError,
)
from .masking import KeyMaterial, MaskMode, Masktext, derive_key, mask, unmask

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "CapacityError",
    "ConfigError",
    "CryptoError",
    "FormatError",
    "IntegrityError",
    "KeyMaterial",
    "LoadError",
    "MaskMode",
    "MaskdbError",
    "Masktext",
    "NotFound",
    "ProtocolError",
    "RemapError",
    "SchemaError",
    "StoreError",
    "UnmaskError",
    "derive_key",
    "mask",
    "unmask",
    "__version__",
]
