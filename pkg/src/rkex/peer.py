"""Framed TCP wire protocol for running an exchange between processes.

Frames are ``magic "RKEX" | version | type | length (8 LE) | payload``
with types HELLO, SHARE, CIPHER, ENVELOPE, and ERROR.  A session is one
connection: the initiator proposes parameters with HELLO, the responder
accepts only an exact match and echoes it, both sides swap SHARE frames
and derive the session key, and the established channel then carries
encrypted (CIPHER) or authenticated (ENVELOPE) messages, each answered
with a sealed envelope echo.

Every malformed or unexpected input maps to a ProtocolError — never an
unhandled crash — and is answered with an ERROR frame before closing.
Received shares are audited for the structural singularity invariant
before use.  Session state (parameters, key digest, own secret) can be
persisted to an owner-only file for later offline encrypt/decrypt.
"""

from __future__ import annotations

import logging
import os
import secrets
import socket
import struct
import threading
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from rkex import analysis, envelope, hashcipher, kep, zpmath
from rkex.envelope import Envelope, EnvelopeError, MacKey
from rkex.hashcipher import CipherText
from rkex.kep import ParamSet, PartySecret, PublicShare

__all__ = [
    "DEFAULT_MAX_PAYLOAD",
    "MAGIC",
    "MSG_CIPHER",
    "MSG_ENVELOPE",
    "MSG_ERROR",
    "MSG_HELLO",
    "MSG_SHARE",
    "VERSION",
    "PeerServer",
    "ProtocolError",
    "ResponderSession",
    "SessionOutcome",
    "decode_ciphertext",
    "decode_envelope_frame",
    "decode_hello",
    "decode_share",
    "encode_ciphertext",
    "encode_frame",
    "encode_hello",
    "encode_share",
    "load_session",
    "read_frame",
    "run_initiator",
    "save_session",
]

logger = logging.getLogger(__name__)

MAGIC = b"RKEX"
VERSION = 0x01

MSG_HELLO = 0x01
MSG_SHARE = 0x02
MSG_CIPHER = 0x03
MSG_ENVELOPE = 0x04
MSG_ERROR = 0x7F

_TYPE_NAMES = {
    MSG_HELLO: "HELLO",
    MSG_SHARE: "SHARE",
    MSG_CIPHER: "CIPHER",
    MSG_ENVELOPE: "ENVELOPE",
    MSG_ERROR: "ERROR",
}

DEFAULT_MAX_PAYLOAD = 64 * 1024 * 1024
DEFAULT_TIMEOUT = 30.0

_FRAME_HEADER = struct.Struct("<4sBBQ")
_HELLO_BODY = struct.Struct("<QIIIB")
_SHARE_COUNT = struct.Struct("<I")

_HASH_CODES = {kep.HASH_SHA3_512: 0x01}
_HASH_NAMES = {code: name for name, code in _HASH_CODES.items()}

SESSION_MAGIC = b"RKS1"


class ProtocolError(Exception):
    """Protocol violation; ``remote`` marks errors reported by the peer."""

    def __init__(self, message: str, *, remote: bool = False):
        super().__init__(message)
        self.remote = remote


# ---------------------------------------------------------------------------
# framing

def encode_frame(msg_type: int, payload: bytes) -> bytes:
    return _FRAME_HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload


def read_frame(
    stream, max_payload: int = DEFAULT_MAX_PAYLOAD
) -> Optional[Tuple[int, bytes]]:
    """Read one frame; None on clean EOF before any header byte.

    The length field is validated against ``max_payload`` before the
    payload is read, so oversize frames are rejected without
    allocation.
    """
    header = stream.read(_FRAME_HEADER.size)
    if not header:
        return None
    if len(header) < _FRAME_HEADER.size:
        raise ProtocolError("truncated frame header")
    magic, version, msg_type, length = _FRAME_HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad frame magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    if length > max_payload:
        raise ProtocolError(f"frame payload of {length} bytes exceeds the {max_payload} byte cap")
    payload = stream.read(length)
    if len(payload) < length:
        raise ProtocolError("truncated frame payload")
    return msg_type, payload


def _send_frame(sock: socket.socket, msg_type: int, payload: bytes) -> None:
    sock.sendall(encode_frame(msg_type, payload))
    logger.info(
        "sent %s (%d bytes)", _TYPE_NAMES.get(msg_type, hex(msg_type)), len(payload)
    )


# ---------------------------------------------------------------------------
# message bodies

def encode_hello(params: ParamSet) -> bytes:
    return _HELLO_BODY.pack(
        params.p, params.rows_a, params.cols_a, params.t, _HASH_CODES[params.hash_id]
    )


def decode_hello(buf: bytes) -> ParamSet:
    if len(buf) != _HELLO_BODY.size:
        raise ProtocolError(f"hello body must be {_HELLO_BODY.size} bytes, got {len(buf)}")
    p, rows_a, cols_a, t, hash_code = _HELLO_BODY.unpack(buf)
    if hash_code not in _HASH_NAMES:
        raise ProtocolError(f"unknown hash id {hash_code:#x}")
    try:
        return ParamSet(p=p, rows_a=rows_a, cols_a=cols_a, t=t, hash_id=_HASH_NAMES[hash_code])
    except ValueError as exc:
        raise ProtocolError(f"invalid parameters in hello: {exc}") from exc


def encode_share(share: PublicShare) -> bytes:
    parts = [_SHARE_COUNT.pack(len(share.mats))]
    parts.extend(zpmath.encode_matrix(m) for m in share.mats)
    return b"".join(parts)


def _decode_share_prefix(
    buf: bytes, params: ParamSet, offset: int
) -> Tuple[PublicShare, int]:
    if len(buf) - offset < _SHARE_COUNT.size:
        raise ProtocolError("truncated share count")
    (count,) = _SHARE_COUNT.unpack_from(buf, offset)
    offset += _SHARE_COUNT.size
    if count != params.t:
        raise ProtocolError(f"share carries {count} matrices, parameters require {params.t}")
    mats = []
    for _ in range(count):
        try:
            mat, offset = zpmath.decode_matrix(buf, params.p, offset)
        except (ValueError, TypeError) as exc:
            raise ProtocolError(f"bad share matrix: {exc}") from exc
        mats.append(mat)
    try:
        return PublicShare(params, tuple(mats)), offset
    except ValueError as exc:
        raise ProtocolError(f"bad share: {exc}") from exc


def decode_share(buf: bytes, params: ParamSet) -> PublicShare:
    share, offset = _decode_share_prefix(buf, params, 0)
    if offset != len(buf):
        raise ProtocolError(f"{len(buf) - offset} trailing bytes after share")
    return share


def encode_ciphertext(ct: CipherText) -> bytes:
    return encode_share(ct.c) + ct.d


def decode_ciphertext(buf: bytes, params: ParamSet) -> CipherText:
    share, offset = _decode_share_prefix(buf, params, 0)
    d = buf[offset:]
    if len(d) != hashcipher.MESSAGE_BYTES:
        raise ProtocolError(
            f"ciphertext body must be {hashcipher.MESSAGE_BYTES} bytes, got {len(d)}"
        )
    return CipherText(share, d)


def decode_envelope_frame(buf: bytes) -> Envelope:
    try:
        return envelope.decode_envelope(buf)
    except EnvelopeError as exc:
        raise ProtocolError(f"bad envelope: {exc}") from exc


# ---------------------------------------------------------------------------
# session persistence

def save_session(path: str, params: ParamSet, digest: bytes, secret: PartySecret) -> None:
    """Persist session state to an owner-only (0600) file."""
    if len(digest) != 64:
        raise ValueError(f"digest must be 64 bytes, got {len(digest)}")
    if secret.params != params:
        raise ValueError("secret parameters do not match the session parameters")
    parts = [SESSION_MAGIC, encode_hello(params), digest]
    for a, b in secret.pairs:
        parts.append(zpmath.encode_matrix(a))
        parts.append(zpmath.encode_matrix(b))
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "wb") as fh:
        fh.write(b"".join(parts))


def load_session(path: str) -> Tuple[ParamSet, bytes, PartySecret]:
    """Load (params, digest, secret) from a session state file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != SESSION_MAGIC:
        raise ValueError(f"{path} is not a session state file")
    offset = 4
    if len(blob) - offset < _HELLO_BODY.size + 64:
        raise ValueError("truncated session state")
    try:
        params = decode_hello(blob[offset : offset + _HELLO_BODY.size])
    except ProtocolError as exc:
        raise ValueError(str(exc)) from exc
    offset += _HELLO_BODY.size
    digest = blob[offset : offset + 64]
    offset += 64
    pairs = []
    for _ in range(params.t):
        a, offset = zpmath.decode_matrix(blob, params.p, offset)
        b, offset = zpmath.decode_matrix(blob, params.p, offset)
        pairs.append((a, b))
    if offset != len(blob):
        raise ValueError(f"{len(blob) - offset} trailing bytes in session state")
    return params, digest, PartySecret(params, tuple(pairs))


# ---------------------------------------------------------------------------
# responder state machine

_AWAIT_HELLO = "await-hello"
_AWAIT_SHARE = "await-share"
_ESTABLISHED = "established"


@dataclass
class SessionOutcome:
    """Result of one connection: derived key, exchanged messages, error."""

    params: ParamSet
    digest: Optional[bytes] = None
    messages: Tuple[bytes, ...] = ()
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.digest is not None


class ResponderSession:
    """Three-state responder: await-hello, await-share, established.

    ``handle_frame`` consumes one inbound frame and returns the reply
    frames to send.  Any violation raises ProtocolError; the transport
    loop converts that into an ERROR frame and closes.
    """

    def __init__(self, params: ParamSet, rng):
        self.params = params
        self._rng = rng
        self.state = _AWAIT_HELLO
        self._secret: Optional[PartySecret] = None
        self._share: Optional[PublicShare] = None
        self._peer_share: Optional[PublicShare] = None
        self._key: Optional[kep.SessionKey] = None
        self._mac: Optional[MacKey] = None
        self._replay: set = set()
        self.messages: List[bytes] = []

    @property
    def digest(self) -> Optional[bytes]:
        return self._key.digest if self._key is not None else None

    def handle_frame(self, msg_type: int, payload: bytes) -> List[Tuple[int, bytes]]:
        if msg_type == MSG_ERROR:
            reason = payload.decode("utf-8", errors="replace")
            raise ProtocolError(f"peer reported an error: {reason}", remote=True)
        if self.state == _AWAIT_HELLO:
            return self._on_hello(msg_type, payload)
        if self.state == _AWAIT_SHARE:
            return self._on_share(msg_type, payload)
        return self._on_established(msg_type, payload)

    def _on_hello(self, msg_type: int, payload: bytes) -> List[Tuple[int, bytes]]:
        if msg_type != MSG_HELLO:
            raise ProtocolError(
                f"expected HELLO, got {_TYPE_NAMES.get(msg_type, hex(msg_type))}"
            )
        proposed = decode_hello(payload)
        if proposed != self.params:
            raise ProtocolError(
                f"parameter mismatch: peer proposed p={proposed.p} "
                f"{proposed.rows_a}x{proposed.cols_a} t={proposed.t}"
            )
        self.state = _AWAIT_SHARE
        return [(MSG_HELLO, encode_hello(self.params))]

    def _on_share(self, msg_type: int, payload: bytes) -> List[Tuple[int, bytes]]:
        if msg_type != MSG_SHARE:
            raise ProtocolError(
                f"expected SHARE, got {_TYPE_NAMES.get(msg_type, hex(msg_type))}"
            )
        peer_share = decode_share(payload, self.params)
        audit = analysis.singularity_audit(peer_share)
        if not audit.ok:
            raise ProtocolError(
                f"received share failed the singularity audit "
                f"({len(audit.failures)} of {self.params.t} matrices)"
            )
        self._secret, self._share = kep.new_session(self.params, self._rng)
        self._peer_share = peer_share
        self._key = kep.derive_session_key(self._secret, peer_share)
        self._mac = MacKey(self._key.digest)
        self.state = _ESTABLISHED
        logger.info("session established, digest %s", self._key.digest.hex())
        return [(MSG_SHARE, encode_share(self._share))]

    def _on_established(self, msg_type: int, payload: bytes) -> List[Tuple[int, bytes]]:
        if msg_type == MSG_CIPHER:
            ct = decode_ciphertext(payload, self.params)
            if ct.c != self._peer_share:
                raise ProtocolError("ciphertext share does not match the session share")
            plaintext = hashcipher.decrypt(self._secret, ct)
            self.messages.append(plaintext)
            logger.info("decrypted message: %r", plaintext)
            reply = envelope.seal_envelope(self._mac, plaintext, rng=self._rng)
            return [(MSG_ENVELOPE, envelope.encode_envelope(reply))]
        if msg_type == MSG_ENVELOPE:
            env = decode_envelope_frame(payload)
            try:
                envelope.verify_envelope(self._mac, env, replay_cache=self._replay)
            except EnvelopeError as exc:
                raise ProtocolError(f"envelope rejected: {exc}") from exc
            self.messages.append(env.payload)
            logger.info("verified envelope payload: %r", env.payload)
            reply = envelope.seal_envelope(self._mac, env.payload, rng=self._rng)
            return [(MSG_ENVELOPE, envelope.encode_envelope(reply))]
        raise ProtocolError(
            f"unexpected frame {_TYPE_NAMES.get(msg_type, hex(msg_type))} "
            "on an established session"
        )


def _serve_connection(
    conn: socket.socket,
    params: ParamSet,
    rng,
    max_payload: int,
    timeout: Optional[float],
) -> SessionOutcome:
    session = ResponderSession(params, rng)
    outcome = SessionOutcome(params=params)
    conn.settimeout(timeout)
    stream = conn.makefile("rb")
    try:
        while True:
            frame = read_frame(stream, max_payload)
            if frame is None:
                break
            msg_type, payload = frame
            logger.info(
                "received %s (%d bytes)",
                _TYPE_NAMES.get(msg_type, hex(msg_type)),
                len(payload),
            )
            for reply_type, reply_payload in session.handle_frame(msg_type, payload):
                _send_frame(conn, reply_type, reply_payload)
    except ProtocolError as exc:
        outcome.error = str(exc)
        if not exc.remote:
            try:
                _send_frame(conn, MSG_ERROR, str(exc).encode("utf-8"))
            except OSError:
                pass
    except (OSError, TimeoutError) as exc:
        outcome.error = f"connection failed: {exc}"
    finally:
        stream.close()
    outcome.digest = session.digest
    outcome.messages = tuple(session.messages)
    return outcome


class PeerServer:
    """Threaded responder: one listening socket, one session per connection.

    Connections are independent; with ``once=True`` the server stops
    after its first connection.  Outcomes are collected in order of
    completion and can be awaited with ``next_outcome``.
    """

    def __init__(
        self,
        params: ParamSet,
        host: str = "127.0.0.1",
        port: int = 0,
        *,
        rng=None,
        once: bool = False,
        max_payload: int = DEFAULT_MAX_PAYLOAD,
        timeout: Optional[float] = DEFAULT_TIMEOUT,
    ):
        self.params = params
        self._rng = rng if rng is not None else secrets.SystemRandom()
        self._once = once
        self._max_payload = max_payload
        self._timeout = timeout
        self._sock = socket.create_server((host, port))
        self._accept_thread: Optional[threading.Thread] = None
        self._workers: List[threading.Thread] = []
        self._cond = threading.Condition()
        self._outcomes: List[SessionOutcome] = []
        self._taken = 0
        self._closed = False

    @property
    def address(self) -> Tuple[str, int]:
        addr = self._sock.getsockname()
        return addr[0], addr[1]

    def start(self) -> Tuple[str, int]:
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()
        return self.address

    def _accept_loop(self) -> None:
        while True:
            try:
                conn, addr = self._sock.accept()
            except OSError:
                break
            if self._closed:  # stop()'s wake-up connection, not a session
                conn.close()
                break
            logger.info("connection from %s:%d", addr[0], addr[1])
            if self._once:
                self._handle(conn)
                break
            worker = threading.Thread(target=self._handle, args=(conn,), daemon=True)
            self._workers.append(worker)
            worker.start()

    def _handle(self, conn: socket.socket) -> None:
        try:
            with conn:
                outcome = _serve_connection(
                    conn, self.params, self._rng, self._max_payload, self._timeout
                )
        except Exception as exc:  # never let a connection kill the server
            logger.exception("connection handler failed")
            outcome = SessionOutcome(params=self.params, error=f"internal error: {exc}")
        with self._cond:
            self._outcomes.append(outcome)
            self._cond.notify_all()

    def next_outcome(self, timeout: Optional[float] = None) -> SessionOutcome:
        """Block until an unclaimed session outcome is available."""
        with self._cond:
            if not self._cond.wait_for(
                lambda: len(self._outcomes) > self._taken, timeout
            ):
                raise TimeoutError("no session outcome within the timeout")
            outcome = self._outcomes[self._taken]
            self._taken += 1
            return outcome

    @property
    def outcomes(self) -> List[SessionOutcome]:
        with self._cond:
            return list(self._outcomes)

    def stop(self) -> None:
        self._closed = True
        # A blocking accept() is not reliably interrupted by closing the
        # socket out from under it; a throwaway local connection wakes the
        # loop, which then observes _closed and exits.
        try:
            with socket.create_connection(self.address, timeout=1):
                pass
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass
        if self._accept_thread is not None:
            self._accept_thread.join(timeout=5)
        for worker in self._workers:
            worker.join(timeout=5)

    def __enter__(self) -> "PeerServer":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()


# ---------------------------------------------------------------------------
# initiator

def _expect_frame(stream, expected: int, max_payload: int) -> bytes:
    frame = read_frame(stream, max_payload)
    if frame is None:
        raise ProtocolError("connection closed mid-handshake")
    msg_type, payload = frame
    logger.info(
        "received %s (%d bytes)", _TYPE_NAMES.get(msg_type, hex(msg_type)), len(payload)
    )
    if msg_type == MSG_ERROR:
        reason = payload.decode("utf-8", errors="replace")
        raise ProtocolError(f"peer reported an error: {reason}", remote=True)
    if msg_type != expected:
        raise ProtocolError(
            f"expected {_TYPE_NAMES[expected]}, got "
            f"{_TYPE_NAMES.get(msg_type, hex(msg_type))}"
        )
    return payload


def run_initiator(
    host: str,
    port: int,
    params: ParamSet,
    *,
    message: Optional[bytes] = None,
    envelope_message: Optional[bytes] = None,
    rng=None,
    timeout: Optional[float] = DEFAULT_TIMEOUT,
    max_payload: int = DEFAULT_MAX_PAYLOAD,
    session_path: Optional[str] = None,
) -> SessionOutcome:
    """Drive a full exchange against a responder; raises ProtocolError on failure.

    Optionally sends a 64-byte-padded encrypted ``message`` and/or an
    authenticated ``envelope_message``, verifying the responder's sealed
    echo of each.  With ``session_path`` the derived session state is
    persisted for offline encrypt/decrypt.
    """
    if rng is None:
        rng = secrets.SystemRandom()
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise ProtocolError(f"cannot connect to {host}:{port}: {exc}") from exc
    messages: List[bytes] = []
    try:
        with sock, sock.makefile("rb") as stream:
            _send_frame(sock, MSG_HELLO, encode_hello(params))
            accepted = decode_hello(_expect_frame(stream, MSG_HELLO, max_payload))
            if accepted != params:
                raise ProtocolError("responder accepted different parameters")

            secret, share = kep.new_session(params, rng)
            _send_frame(sock, MSG_SHARE, encode_share(share))
            peer_share = decode_share(
                _expect_frame(stream, MSG_SHARE, max_payload), params
            )
            audit = analysis.singularity_audit(peer_share)
            if not audit.ok:
                raise ProtocolError(
                    f"received share failed the singularity audit "
                    f"({len(audit.failures)} of {params.t} matrices)"
                )
            key = kep.derive_session_key(secret, peer_share)
            mac = MacKey(key.digest)
            replay: set = set()
            logger.info("session established, digest %s", key.digest.hex())

            if message is not None:
                padded = hashcipher.pad_message(message)
                ct = hashcipher.encrypt_with_digest(key.digest, share, padded)
                _send_frame(sock, MSG_CIPHER, encode_ciphertext(ct))
                env = decode_envelope_frame(
                    _expect_frame(stream, MSG_ENVELOPE, max_payload)
                )
                try:
                    envelope.verify_envelope(mac, env, replay_cache=replay)
                except EnvelopeError as exc:
                    raise ProtocolError(f"echo envelope rejected: {exc}") from exc
                if env.payload != padded:
                    raise ProtocolError("responder echoed a different plaintext")
                messages.append(env.payload)

            if envelope_message is not None:
                sent = envelope.seal_envelope(mac, envelope_message, rng=rng)
                _send_frame(sock, MSG_ENVELOPE, envelope.encode_envelope(sent))
                env = decode_envelope_frame(
                    _expect_frame(stream, MSG_ENVELOPE, max_payload)
                )
                try:
                    envelope.verify_envelope(mac, env, replay_cache=replay)
                except EnvelopeError as exc:
                    raise ProtocolError(f"echo envelope rejected: {exc}") from exc
                if env.payload != bytes(envelope_message):
                    raise ProtocolError("responder echoed a different payload")
                messages.append(env.payload)

            if session_path is not None:
                save_session(session_path, params, key.digest, secret)
    except (OSError, TimeoutError) as exc:
        raise ProtocolError(f"connection failed: {exc}") from exc
    return SessionOutcome(params=params, digest=key.digest, messages=tuple(messages))
