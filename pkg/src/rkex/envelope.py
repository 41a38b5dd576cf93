"""Authenticated message envelopes under a shared 64-byte key.

A payload of any length is capsuled with a keyed tag, a fresh 16-byte
nonce, and an informational UTC timestamp.  The tag construction is a
two-layer universal-hash MAC: the payload is first compressed with the
NH pairwise multiply-accumulate hash (1024-byte blocks, 32-bit words),
then the block hashes plus the bit-length trailer are authenticated
with HMAC-SHA3-512 over (HM || nonce).

Verification recomputes the tag and compares in constant time.  Replay
protection is optional: pass a set as ``replay_cache`` and verified
nonces are recorded and refused on reuse.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional, Set, Tuple

import numpy as np

from rkex import _backends

__all__ = [
    "KEY_BYTES",
    "NH_BLOCK_BYTES",
    "NONCE_BYTES",
    "TAG_BYTES",
    "Envelope",
    "EnvelopeError",
    "MacKey",
    "MalformedEnvelope",
    "ReplayedNonce",
    "TagMismatch",
    "compute_tag",
    "decode_envelope",
    "encode_envelope",
    "nh_hash",
    "seal_envelope",
    "verify_envelope",
]

KEY_BYTES = 64
NONCE_BYTES = 16
TAG_BYTES = 64
NH_BLOCK_BYTES = 1024
NH_BLOCK_WORDS = NH_BLOCK_BYTES // 4

_LEN_TRAILER = struct.Struct(">Q")
_BLOCK_HASH = struct.Struct(">Q")
_KEY_COUNTER = struct.Struct(">I")
_PAYLOAD_LEN = struct.Struct("<I")
_TS_LEN = struct.Struct("<H")


class EnvelopeError(Exception):
    """Base class for envelope failures."""


class MalformedEnvelope(EnvelopeError):
    """Field lengths or encoding structure are invalid."""


class TagMismatch(EnvelopeError):
    """The tag does not verify under the given key."""


class ReplayedNonce(EnvelopeError):
    """The nonce was already accepted once under this cache."""


class MacKey:
    """Shared 64-byte MAC key plus its derived NH word schedule.

    ``nh_key`` holds one block's worth of 32-bit words (kept in uint64
    for overflow-free products), expanded deterministically from ``k``
    with SHA3-512 in counter mode.
    """

    __slots__ = ("k", "nh_key")

    def __init__(self, k: bytes):
        k = bytes(k)
        if len(k) != KEY_BYTES:
            raise ValueError(f"key must be {KEY_BYTES} bytes, got {len(k)}")
        stream = b"".join(
            hashlib.sha3_512(k + _KEY_COUNTER.pack(i)).digest()
            for i in range(NH_BLOCK_BYTES // 64)
        )
        words = np.frombuffer(stream, dtype="<u4").astype(np.uint64)
        words.flags.writeable = False
        self.k = k
        self.nh_key = words

    def __eq__(self, other):
        if not isinstance(other, MacKey):
            return NotImplemented
        return hmac.compare_digest(self.k, other.k)

    def __repr__(self):
        return f"MacKey(<{KEY_BYTES} bytes>)"


@dataclass(frozen=True)
class Envelope:
    """Authenticated capsule: payload, 64-byte tag, 16-byte nonce, timestamp."""

    payload: bytes
    tag: bytes
    nonce: bytes
    timestamp: str

    def __post_init__(self):
        object.__setattr__(self, "payload", bytes(self.payload))
        object.__setattr__(self, "tag", bytes(self.tag))
        object.__setattr__(self, "nonce", bytes(self.nonce))


def nh_hash(key_words: np.ndarray, message: bytes) -> Tuple[bytes, int]:
    """NH universal hash of ``message`` under one block of key words.

    The message is split into 1024-byte blocks (final block zero-padded)
    and each block is compressed to 8 bytes: the sum over word pairs of
    (m_2i + k_2i mod 2^32) * (m_2i+1 + k_2i+1 mod 2^32), accumulated
    mod 2^64, written big-endian.  The block hashes are concatenated and
    the original bit length is appended as an 8-byte big-endian trailer.
    Returns (hash bytes, bit length); an empty message yields the
    trailer alone.
    """
    if len(key_words) < NH_BLOCK_WORDS:
        raise ValueError(
            f"key schedule must hold at least {NH_BLOCK_WORDS} words, got {len(key_words)}"
        )
    message = bytes(message)
    bit_len = len(message) * 8
    backend = _backends.get_backend()
    parts = []
    for start in range(0, len(message), NH_BLOCK_BYTES):
        block = message[start : start + NH_BLOCK_BYTES]
        if len(block) < NH_BLOCK_BYTES:
            block = block.ljust(NH_BLOCK_BYTES, b"\x00")
        m_words = np.frombuffer(block, dtype="<u4").astype(np.uint64)
        parts.append(_BLOCK_HASH.pack(backend.nh_sum(m_words, key_words)))
    parts.append(_LEN_TRAILER.pack(bit_len))
    return b"".join(parts), bit_len


def compute_tag(key: MacKey, payload: bytes, nonce: bytes) -> bytes:
    """Tag = HMAC-SHA3-512(k, NH(payload) || nonce)."""
    hm, _ = nh_hash(key.nh_key, payload)
    return hmac.new(key.k, hm + nonce, hashlib.sha3_512).digest()


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def seal_envelope(key: MacKey, payload: bytes, *, rng=None, clock=None) -> Envelope:
    """Seal a payload: fresh random nonce, tag, current UTC timestamp.

    ``rng`` must expose ``getrandbits`` if given; the default is the
    OS-secure source.  ``clock`` is a zero-argument callable returning
    the ISO-8601 timestamp string (test hook).
    """
    if rng is None:
        nonce = secrets.token_bytes(NONCE_BYTES)
    else:
        nonce = rng.getrandbits(NONCE_BYTES * 8).to_bytes(NONCE_BYTES, "big")
    timestamp = clock() if clock is not None else _utc_now()
    return Envelope(bytes(payload), compute_tag(key, payload, nonce), nonce, timestamp)


def verify_envelope(
    key: MacKey, env: Envelope, *, replay_cache: Optional[Set[bytes]] = None
) -> None:
    """Validate an envelope; raises on any failure, returns None on accept.

    Field-length problems raise :class:`MalformedEnvelope`; a failed
    constant-time tag comparison raises :class:`TagMismatch`.  With a
    ``replay_cache`` set, an already-seen nonce raises
    :class:`ReplayedNonce` and accepted nonces are recorded.
    """
    if len(env.nonce) != NONCE_BYTES:
        raise MalformedEnvelope(f"nonce must be {NONCE_BYTES} bytes, got {len(env.nonce)}")
    if len(env.tag) != TAG_BYTES:
        raise MalformedEnvelope(f"tag must be {TAG_BYTES} bytes, got {len(env.tag)}")
    expected = compute_tag(key, env.payload, env.nonce)
    if not hmac.compare_digest(expected, env.tag):
        raise TagMismatch("tag mismatch")
    if replay_cache is not None:
        if env.nonce in replay_cache:
            raise ReplayedNonce(f"nonce {env.nonce.hex()} already accepted")
        replay_cache.add(env.nonce)


def encode_envelope(env: Envelope) -> bytes:
    """Wire/file encoding: payload length (4 LE) || payload || nonce || tag || timestamp length (2 LE) || timestamp."""
    ts = env.timestamp.encode("ascii")
    if len(env.payload) > 0xFFFFFFFF:
        raise ValueError("payload too large to encode")
    if len(ts) > 0xFFFF:
        raise ValueError("timestamp too large to encode")
    if len(env.nonce) != NONCE_BYTES or len(env.tag) != TAG_BYTES:
        raise MalformedEnvelope("refusing to encode an envelope with bad field lengths")
    return b"".join(
        (
            _PAYLOAD_LEN.pack(len(env.payload)),
            env.payload,
            env.nonce,
            env.tag,
            _TS_LEN.pack(len(ts)),
            ts,
        )
    )


def decode_envelope(buf: bytes) -> Envelope:
    """Parse the wire/file encoding; raises MalformedEnvelope on any defect."""
    buf = bytes(buf)
    offset = 0
    if len(buf) < _PAYLOAD_LEN.size:
        raise MalformedEnvelope("truncated payload length")
    (payload_len,) = _PAYLOAD_LEN.unpack_from(buf, offset)
    offset += _PAYLOAD_LEN.size
    if len(buf) - offset < payload_len + NONCE_BYTES + TAG_BYTES + _TS_LEN.size:
        raise MalformedEnvelope("truncated envelope body")
    payload = buf[offset : offset + payload_len]
    offset += payload_len
    nonce = buf[offset : offset + NONCE_BYTES]
    offset += NONCE_BYTES
    tag = buf[offset : offset + TAG_BYTES]
    offset += TAG_BYTES
    (ts_len,) = _TS_LEN.unpack_from(buf, offset)
    offset += _TS_LEN.size
    if len(buf) - offset < ts_len:
        raise MalformedEnvelope("truncated timestamp")
    ts_raw = buf[offset : offset + ts_len]
    offset += ts_len
    if offset != len(buf):
        raise MalformedEnvelope(f"{len(buf) - offset} trailing bytes after envelope")
    try:
        timestamp = ts_raw.decode("ascii")
    except UnicodeDecodeError:
        raise MalformedEnvelope("timestamp is not ASCII") from None
    return Envelope(payload, tag, nonce, timestamp)
