"""Masking primitives: key derivation and the per-value masking modes.

Five modes are supported, selectable per dimension of an associative array:

* ``CLR``  — identity, no transformation.
* ``RND``  — randomized AES-256 encryption (fresh 16-byte IV per call);
  repeated maskings of the same plaintext are unlinkable. Decrypt only.
* ``DET``  — deterministic AES-256-CBC with IV derived from a hash of the
  plaintext; equal plaintexts produce equal masktexts, enabling equality
  queries at the cost of leaking equality patterns.
* ``OPE``  — order-preserving encoding delegated to a live client session
  against the OPE tree server (see ``maskdb.ope``); payload is a fixed-width
  bit string whose lexicographic order equals plaintext order.
* ``AUT``  — authentication only: plaintext stored in clear, prefixed with an
  HMAC tag so tampering is detectable.

Stored payloads are printable: RND/DET are Base64(iv || ciphertext), AUT is
Base64(tag) + ":" + plaintext, OPE is a string of '0'/'1', CLR is the raw
plaintext. Standard Base64 with padding, no line wrapping.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import hmac as hmaclib
import os
import threading
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import ConfigError, CryptoError, FormatError, IntegrityError, UnmaskError

KEY_BYTES = 32
SALT_BYTES = 8
IV_BYTES = 16
BLOCK_BYTES = 16
DEFAULT_ROUNDS = 1000

_HASHES = ("sha1", "sha256")

# Unmask-call instrumentation. The correlation kernel is required to operate
# without ever unmasking; its tests snapshot this counter around a run.
_UNMASK_CALLS = 0


def unmask_call_count() -> int:
    """Total number of unmask operations performed by this process."""
    return _UNMASK_CALLS


def _count_unmask() -> None:
    global _UNMASK_CALLS
    _UNMASK_CALLS += 1


class MaskMode(str, Enum):
    CLR = "CLR"
    RND = "RND"
    DET = "DET"
    OPE = "OPE"
    AUT = "AUT"

    @classmethod
    def parse(cls, name: str) -> "MaskMode":
        try:
            return cls(name.strip().upper())
        except ValueError:
            raise ConfigError(f"unknown mask mode {name!r}; expected one of "
                              f"{', '.join(m.value for m in cls)}") from None


@dataclass(frozen=True)
class KeyMaterial:
    """Symmetric key plus the mode parameters that travel with it.

    ``cipher_mode`` selects the RND cipher construction ("GCM" authenticated,
    default; "CBC" for parity with the classic layout). DET always uses CBC
    semantics: a deterministic nonce under GCM would void its guarantees.
    """

    key_bytes: bytes
    salt: bytes
    rounds: int = DEFAULT_ROUNDS
    cipher_mode: str = "GCM"
    det_hash: str = "sha1"
    aut_hash: str = "sha1"
    verify_det_iv: bool = field(default=True, compare=False)

    def __post_init__(self) -> None:
        if len(self.key_bytes) != KEY_BYTES:
            raise ConfigError(f"key must be {KEY_BYTES} bytes, got {len(self.key_bytes)}")
        if len(self.salt) != SALT_BYTES:
            raise ConfigError(f"salt must be {SALT_BYTES} bytes, got {len(self.salt)}")
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1")
        if self.cipher_mode not in ("CBC", "GCM"):
            raise ConfigError(f"cipher_mode must be CBC or GCM, got {self.cipher_mode!r}")
        if self.det_hash not in _HASHES or self.aut_hash not in _HASHES:
            raise ConfigError(f"hash must be one of {_HASHES}")


@dataclass(frozen=True)
class Masktext:
    """A masked value as stored: the mode plus its printable payload."""

    mode: MaskMode
    payload: str

    def __str__(self) -> str:
        return self.payload


def derive_key(password: str, salt: bytes, rounds: int = DEFAULT_ROUNDS, **params) -> KeyMaterial:
    """Derive a 32-byte AES key from a password via PBKDF2-HMAC-SHA256.

    Deterministic in (password, salt, rounds); extra keyword arguments are
    forwarded to :class:`KeyMaterial` (cipher_mode, det_hash, ...).
    """
    if not password:
        raise ConfigError("password must be non-empty")
    if len(salt) != SALT_BYTES:
        raise ConfigError(f"salt must be {SALT_BYTES} bytes, got {len(salt)}")
    if rounds < 1:
        raise ConfigError("rounds must be >= 1")
    key = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, rounds, KEY_BYTES)
    return KeyMaterial(key_bytes=key, salt=salt, rounds=rounds, **params)


@lru_cache(maxsize=64)
def _aesgcm(key_bytes: bytes) -> AESGCM:
    return AESGCM(key_bytes)


# CBC is run as ECB plus explicit chaining so one cipher context per
# (thread, key, direction) can be reused across calls; constructing a fresh
# CBC context per value is several times slower and this path sits under
# every DET operation, including the interactive tree descents. Output is
# bit-identical to standard AES-CBC/PKCS7 (pinned against openssl in tests).
_ECB_CTX = threading.local()


def _ecb(key_bytes: bytes, encrypt: bool):
    cache = getattr(_ECB_CTX, "cache", None)
    if cache is None:
        cache = _ECB_CTX.cache = {}
    ctx = cache.get((key_bytes, encrypt))
    if ctx is None:
        cipher = Cipher(algorithms.AES(key_bytes), modes.ECB())
        ctx = cipher.encryptor() if encrypt else cipher.decryptor()
        cache[(key_bytes, encrypt)] = ctx
    return ctx


def _cbc_encrypt(key: KeyMaterial, iv: bytes, data: bytes) -> bytes:
    pad = BLOCK_BYTES - len(data) % BLOCK_BYTES
    padded = data + bytes([pad]) * pad
    ecb = _ecb(key.key_bytes, encrypt=True)
    out = bytearray()
    prev = int.from_bytes(iv, "big")
    for i in range(0, len(padded), BLOCK_BYTES):
        block = prev ^ int.from_bytes(padded[i:i + BLOCK_BYTES], "big")
        ct = ecb.update(block.to_bytes(BLOCK_BYTES, "big"))
        out += ct
        prev = int.from_bytes(ct, "big")
    return bytes(out)


def _cbc_decrypt(key: KeyMaterial, iv: bytes, ct: bytes) -> bytes:
    ecb = _ecb(key.key_bytes, encrypt=False)
    out = bytearray()
    prev = int.from_bytes(iv, "big")
    for i in range(0, len(ct), BLOCK_BYTES):
        block = ct[i:i + BLOCK_BYTES]
        x = int.from_bytes(ecb.update(block), "big") ^ prev
        out += x.to_bytes(BLOCK_BYTES, "big")
        prev = int.from_bytes(block, "big")
    pad = out[-1] if out else 0
    if not 1 <= pad <= BLOCK_BYTES or out[-pad:] != bytes([pad]) * pad:
        raise UnmaskError("padding check failed (wrong key or corrupted ciphertext)")
    return bytes(out[:-pad])


def _fresh_iv() -> bytes:
    try:
        return os.urandom(IV_BYTES)
    except OSError as e:  # pragma: no cover - randomness source failure
        raise CryptoError(f"randomness source failed: {e}") from e


def _det_iv(plaintext: bytes, hash_name: str) -> bytes:
    return hashlib.new(hash_name, plaintext).digest()[:IV_BYTES]


def _encode_payload(iv: bytes, ct: bytes) -> str:
    return base64.b64encode(iv + ct).decode("ascii")


def _decode_payload(payload: str, cbc: bool) -> tuple[bytes, bytes]:
    """Split a Base64 payload into (iv, ciphertext), validating the framing."""
    try:
        raw = base64.b64decode(payload.encode("ascii"), validate=True)
    except (binascii.Error, ValueError, UnicodeEncodeError) as e:
        raise FormatError(f"payload is not valid Base64: {e}") from e
    if len(raw) < IV_BYTES + BLOCK_BYTES:
        raise FormatError(f"payload too short: {len(raw)} bytes, need >= {IV_BYTES + BLOCK_BYTES}")
    iv, ct = raw[:IV_BYTES], raw[IV_BYTES:]
    if cbc and len(ct) % BLOCK_BYTES != 0:
        raise FormatError(f"CBC ciphertext length {len(ct)} is not a multiple of {BLOCK_BYTES}")
    return iv, ct


def _to_text(data: bytes) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise UnmaskError(f"decrypted bytes are not valid UTF-8: {e}") from e


def mask_rnd(plaintext: str, key: KeyMaterial) -> Masktext:
    """Randomized encryption: fresh IV per call, unlinkable repeated maskings."""
    data = plaintext.encode("utf-8")
    iv = _fresh_iv()
    if key.cipher_mode == "GCM":
        ct = _aesgcm(key.key_bytes).encrypt(iv, data, None)
    else:
        ct = _cbc_encrypt(key, iv, data)
    return Masktext(MaskMode.RND, _encode_payload(iv, ct))


def unmask_rnd(masktext: Masktext | str, key: KeyMaterial) -> str:
    _count_unmask()
    payload = masktext.payload if isinstance(masktext, Masktext) else masktext
    iv, ct = _decode_payload(payload, cbc=key.cipher_mode == "CBC")
    if key.cipher_mode == "GCM":
        try:
            data = _aesgcm(key.key_bytes).decrypt(iv, ct, None)
        except InvalidTag:
            raise IntegrityError("GCM tag verification failed (wrong key or corrupted data)") from None
    else:
        data = _cbc_decrypt(key, iv, ct)
    return _to_text(data)


def mask_det(plaintext: str, key: KeyMaterial) -> Masktext:
    """Deterministic encryption: IV is the truncated hash of the plaintext.

    Always CBC regardless of ``key.cipher_mode``. The IV is an unkeyed hash,
    so anyone can test a plaintext guess against it; that leakage is the
    price of equality queries.
    """
    data = plaintext.encode("utf-8")
    iv = _det_iv(data, key.det_hash)
    ct = _cbc_encrypt(key, iv, data)
    return Masktext(MaskMode.DET, _encode_payload(iv, ct))


def unmask_det(masktext: Masktext | str, key: KeyMaterial) -> str:
    _count_unmask()
    payload = masktext.payload if isinstance(masktext, Masktext) else masktext
    iv, ct = _decode_payload(payload, cbc=True)
    data = _cbc_decrypt(key, iv, ct)
    if key.verify_det_iv and _det_iv(data, key.det_hash) != iv:
        raise IntegrityError("stored IV does not match hash of recovered plaintext")
    return _to_text(data)


def mask_aut(plaintext: str, key: KeyMaterial) -> Masktext:
    """Authentication-only: Base64(HMAC(key, plaintext)) + ":" + plaintext."""
    tag = hmac_tag(key.key_bytes, plaintext.encode("utf-8"), key.aut_hash)
    return Masktext(MaskMode.AUT, base64.b64encode(tag).decode("ascii") + ":" + plaintext)


def unmask_aut(masktext: Masktext | str, key: KeyMaterial) -> str:
    """Verify the HMAC tag (constant-time) and return the plaintext."""
    _count_unmask()
    payload = masktext.payload if isinstance(masktext, Masktext) else masktext
    tag_b64, sep, plaintext = payload.partition(":")
    if not sep:
        raise FormatError("AUT payload has no ':' separator")
    try:
        tag = base64.b64decode(tag_b64.encode("ascii"), validate=True)
    except (binascii.Error, ValueError, UnicodeEncodeError) as e:
        raise FormatError(f"AUT tag is not valid Base64: {e}") from e
    expected = hmac_tag(key.key_bytes, plaintext.encode("utf-8"), key.aut_hash)
    if not hmaclib.compare_digest(tag, expected):
        raise IntegrityError("HMAC tag mismatch: data modified or wrong key")
    return plaintext


def hmac_tag(key_bytes: bytes, data: bytes, hash_name: str = "sha1") -> bytes:
    """Raw HMAC over ``data``; exposed so callers can build integrity tokens."""
    return hmaclib.new(key_bytes, data, hash_name).digest()


def mask(plaintext: str, mode: MaskMode, key: KeyMaterial, ope_session=None) -> Masktext:
    """Mask under the given mode. OPE requires a live client session."""
    if mode is MaskMode.CLR:
        return Masktext(MaskMode.CLR, plaintext)
    if mode is MaskMode.RND:
        return mask_rnd(plaintext, key)
    if mode is MaskMode.DET:
        return mask_det(plaintext, key)
    if mode is MaskMode.AUT:
        return mask_aut(plaintext, key)
    if mode is MaskMode.OPE:
        if ope_session is None:
            raise ConfigError("OPE masking requires a live OPE client session")
        return Masktext(MaskMode.OPE, ope_session.insert(plaintext))
    raise ConfigError(f"unknown mode {mode!r}")


def unmask(masktext: Masktext | str, mode: MaskMode | None = None,
           key: KeyMaterial | None = None, ope_session=None) -> str:
    """Invert :func:`mask`. ``mode`` defaults to the masktext's own mode."""
    if isinstance(masktext, Masktext):
        payload = masktext.payload
        mode = mode or masktext.mode
    else:
        payload = masktext
        if mode is None:
            raise ConfigError("mode is required when unmasking a bare payload")
    if mode is MaskMode.CLR:
        _count_unmask()
        return payload
    if mode is MaskMode.OPE:
        _count_unmask()
        if ope_session is None:
            raise ConfigError("OPE unmasking requires a live OPE client session")
        return ope_session.reverse_lookup(payload)
    if key is None:
        raise ConfigError(f"{mode.value} unmasking requires key material")
    if mode is MaskMode.RND:
        return unmask_rnd(payload, key)
    if mode is MaskMode.DET:
        return unmask_det(payload, key)
    if mode is MaskMode.AUT:
        return unmask_aut(payload, key)
    raise ConfigError(f"unknown mode {mode!r}")
