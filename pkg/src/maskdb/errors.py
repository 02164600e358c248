"""Exception hierarchy shared across the engine."""


class MaskdbError(Exception):
    """Base class for all maskdb errors."""


class ConfigError(MaskdbError):
    """Invalid parameters: bad key material, bad mode combination, missing session."""


class CryptoError(MaskdbError):
    """Failure inside a cryptographic primitive (randomness source, cipher setup)."""


class FormatError(MaskdbError):
    """Structurally malformed input: bad Base64, missing separator, bad field count."""


class UnmaskError(MaskdbError):
    """Decryption produced no valid plaintext (wrong key, corrupted ciphertext)."""


class IntegrityError(UnmaskError):
    """Authentication failed: HMAC/GCM tag mismatch or a re-derived IV check failed."""


class SchemaError(MaskdbError):
    """Record does not fit the exploded schema (e.g. missing row key field)."""


class StoreError(MaskdbError):
    """Triple store I/O or state failure."""


class LoadError(StoreError):
    """Persisted store file is corrupt; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


class RemapError(StoreError):
    """An ordertext remap did not cover every stored key; nothing was changed."""


class NotFound(MaskdbError):
    """Requested key is not present."""


class ArgumentError(MaskdbError):
    """Caller-supplied argument out of range (e.g. range lower bound above upper)."""


class ProtocolError(MaskdbError):
    """Wire-protocol desync or an ERR frame from the peer."""


class CapacityError(MaskdbError):
    """Tree cannot fit another entry at the configured ordertext width."""
