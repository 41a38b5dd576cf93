"""One-shot 64-byte message encryption keyed by the session digest.

The ciphertext XORs the message with the SHA3-512 session digest and
carries the sender's own public share so the receiver can derive the
same digest.  XOR alone is malleable — any flipped ciphertext bit flips
the same plaintext bit — so real deployments wrap the result in an
authenticated envelope (see rkex.envelope).

Two keying paths are exposed and kept in agreement by tests: deriving
the digest freshly from the counterpart share (the transmitted ``c``),
or reusing an already-derived :class:`~rkex.kep.SessionKey` digest.
"""

from __future__ import annotations

from dataclasses import dataclass

from rkex import kep
from rkex.kep import PartySecret, PublicShare

__all__ = [
    "MESSAGE_BYTES",
    "CipherText",
    "decrypt",
    "decrypt_with_digest",
    "encrypt",
    "encrypt_with_digest",
    "pad_message",
]

MESSAGE_BYTES = 64


def pad_message(text: bytes) -> bytes:
    """Pad to exactly 64 bytes with trailing ASCII spaces.

    Trailing spaces are never stripped on decryption — the plaintext
    itself may legitimately end in spaces — so unpadding is the
    caller's concern.
    """
    if len(text) > MESSAGE_BYTES:
        raise ValueError(f"message must be at most {MESSAGE_BYTES} bytes, got {len(text)}")
    return text.ljust(MESSAGE_BYTES, b" ")


@dataclass(frozen=True)
class CipherText:
    """Transmitted pair: the sender's share ``c`` and the XOR body ``d``."""

    c: PublicShare
    d: bytes

    def __post_init__(self):
        object.__setattr__(self, "d", bytes(self.d))
        if len(self.d) != MESSAGE_BYTES:
            raise ValueError(f"d must be {MESSAGE_BYTES} bytes, got {len(self.d)}")


def _check_message(msg: bytes) -> bytes:
    msg = bytes(msg)
    if len(msg) != MESSAGE_BYTES:
        raise ValueError(
            f"message must be exactly {MESSAGE_BYTES} bytes, got {len(msg)} "
            "(use pad_message for shorter text)"
        )
    return msg


def _xor64(digest: bytes, msg: bytes) -> bytes:
    return bytes(a ^ b for a, b in zip(digest, msg))


def encrypt_with_digest(digest: bytes, own_share: PublicShare, msg: bytes) -> CipherText:
    """Encrypt under an already-derived 64-byte session digest."""
    if len(digest) != MESSAGE_BYTES:
        raise ValueError(f"digest must be {MESSAGE_BYTES} bytes, got {len(digest)}")
    return CipherText(own_share, _xor64(digest, _check_message(msg)))


def decrypt_with_digest(digest: bytes, ct: CipherText) -> bytes:
    """Decrypt under an already-derived 64-byte session digest."""
    if len(digest) != MESSAGE_BYTES:
        raise ValueError(f"digest must be {MESSAGE_BYTES} bytes, got {len(digest)}")
    return _xor64(digest, ct.d)


def encrypt(
    secret: PartySecret,
    received_share: PublicShare,
    own_share: PublicShare,
    msg: bytes,
) -> CipherText:
    """Encrypt a 64-byte message, deriving the digest from the received share.

    ``d`` is the XOR of the message with the session digest; ``c`` is
    the sender's own share, from which the receiver re-derives the same
    digest.
    """
    digest = kep.derive_session_key(secret, received_share).digest
    return encrypt_with_digest(digest, own_share, msg)


def decrypt(secret: PartySecret, ct: CipherText) -> bytes:
    """Recover the 64-byte message from a ciphertext."""
    digest = kep.derive_session_key(secret, ct.c).digest
    return decrypt_with_digest(digest, ct)
