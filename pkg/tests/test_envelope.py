"""Envelopes: NH oracle agreement, seal/verify, tamper sweeps, encoding."""

import random
import struct
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rkex import envelope
from rkex.envelope import (
    KEY_BYTES,
    NH_BLOCK_BYTES,
    NONCE_BYTES,
    TAG_BYTES,
    Envelope,
    MacKey,
    MalformedEnvelope,
    ReplayedNonce,
    TagMismatch,
)

KEY = MacKey(bytes(range(64)))
OTHER_KEY = MacKey(bytes(64))


def scalar_nh(key_words, message):
    """Straight-line NH evaluation with plain Python ints (the oracle)."""
    out = b""
    for start in range(0, len(message), NH_BLOCK_BYTES):
        block = message[start : start + NH_BLOCK_BYTES].ljust(NH_BLOCK_BYTES, b"\x00")
        words = [
            int.from_bytes(block[i : i + 4], "little") for i in range(0, NH_BLOCK_BYTES, 4)
        ]
        acc = 0
        for i in range(0, len(words), 2):
            lo = (words[i] + key_words[i]) % 2**32
            hi = (words[i + 1] + key_words[i + 1]) % 2**32
            acc = (acc + lo * hi) % 2**64
        out += acc.to_bytes(8, "big")
    return out + (len(message) * 8).to_bytes(8, "big")


# ---------------------------------------------------------------------------
# key derivation

def test_mac_key_requires_64_bytes():
    with pytest.raises(ValueError):
        MacKey(b"short")


def test_mac_key_schedule_shape_and_determinism():
    k = bytes(range(64))
    first, second = MacKey(k), MacKey(k)
    assert len(first.nh_key) == NH_BLOCK_BYTES // 4 == 256
    assert all(int(w) < 2**32 for w in first.nh_key)
    assert np.array_equal(first.nh_key, second.nh_key)
    assert first == second
    assert first != OTHER_KEY


# ---------------------------------------------------------------------------
# NH layer

def test_nh_empty_message_is_length_trailer_only(backend):
    hm, bits = envelope.nh_hash(KEY.nh_key, b"")
    assert hm == bytes(8)
    assert bits == 0


def test_nh_zero_block_zero_key(backend):
    zero_key = np.zeros(256, dtype=np.uint64)
    hm, bits = envelope.nh_hash(zero_key, bytes(8))
    # one block hashing to 0, then Len = 64 bits
    assert hm == bytes(8) + (64).to_bytes(8, "big")
    assert bits == 64


def test_nh_single_pair_scalar_oracle(backend):
    # Small words keep every intermediate readable: block words are
    # m0 = 0x04030201, m1 = 0x08070605, the rest zero-padding.
    key_words = np.arange(1, 257, dtype=np.uint64)
    message = bytes([1, 2, 3, 4, 5, 6, 7, 8])
    hm, bits = envelope.nh_hash(key_words, message)
    expected = (0x04030201 + 1) * (0x08070605 + 2)
    for i in range(1, 128):
        expected = (expected + (2 * i + 1) * (2 * i + 2)) % 2**64
    assert hm[:8] == expected.to_bytes(8, "big")
    assert hm[8:] == (64).to_bytes(8, "big")
    assert bits == 64
    assert hm == scalar_nh([int(w) for w in key_words], message)


@given(data=st.binary(min_size=0, max_size=3 * NH_BLOCK_BYTES + 17))
@settings(max_examples=60, deadline=None)
def test_nh_matches_scalar_oracle(data):
    hm, bits = envelope.nh_hash(KEY.nh_key, data)
    assert bits == len(data) * 8
    assert len(hm) == 8 * (-(-len(data) // NH_BLOCK_BYTES)) + 8
    assert hm == scalar_nh([int(w) for w in KEY.nh_key], data)


def test_nh_word_wraparound(backend):
    # Force the mod-2^32 additions to actually wrap.
    key_words = np.full(256, 0xFFFFFFFF, dtype=np.uint64)
    message = b"\xff" * 8
    hm, _ = envelope.nh_hash(key_words, message)
    assert hm == scalar_nh([0xFFFFFFFF] * 256, message)


def test_nh_rejects_short_key():
    with pytest.raises(ValueError):
        envelope.nh_hash(np.zeros(4, dtype=np.uint64), b"x")


# ---------------------------------------------------------------------------
# seal and verify

def test_seal_roundtrip_various_lengths():
    rng = random.Random(5)
    for length in [0, 1, 31, 32, 64, 1023, 1024, 1025, 4096]:
        payload = rng.randbytes(length)
        env = envelope.seal_envelope(KEY, payload, rng=rng)
        assert len(env.tag) == TAG_BYTES
        assert len(env.nonce) == NONCE_BYTES
        envelope.verify_envelope(KEY, env)  # must not raise


def test_seal_roundtrip_many_random_payloads():
    rng = random.Random(6)
    for _ in range(200):
        payload = rng.randbytes(rng.randrange(0, 4097))
        env = envelope.seal_envelope(KEY, payload, rng=rng)
        envelope.verify_envelope(KEY, env)


def test_seal_fresh_nonces_and_tags():
    env1 = envelope.seal_envelope(KEY, b"same payload")
    env2 = envelope.seal_envelope(KEY, b"same payload")
    assert env1.nonce != env2.nonce
    assert env1.tag != env2.tag


def test_seal_timestamp_is_utc_iso8601():
    env = envelope.seal_envelope(KEY, b"x")
    assert env.timestamp.endswith("+00:00")
    clock = lambda: "2026-08-16T00:00:00+00:00"
    pinned = envelope.seal_envelope(KEY, b"x", clock=clock)
    assert pinned.timestamp == "2026-08-16T00:00:00+00:00"


def test_nonce_uniqueness_bulk():
    rng = random.Random(8)
    seen = {
        envelope.seal_envelope(KEY, b"", rng=rng).nonce for _ in range(100_000)
    }
    assert len(seen) == 100_000


def test_verify_rejects_wrong_key():
    env = envelope.seal_envelope(KEY, b"payload")
    with pytest.raises(TagMismatch):
        envelope.verify_envelope(OTHER_KEY, env)


def test_verify_rejects_malformed_lengths():
    env = envelope.seal_envelope(KEY, b"payload")
    with pytest.raises(MalformedEnvelope):
        envelope.verify_envelope(KEY, Envelope(env.payload, env.tag[:-1], env.nonce, env.timestamp))
    with pytest.raises(MalformedEnvelope):
        envelope.verify_envelope(KEY, Envelope(env.payload, env.tag, env.nonce + b"x", env.timestamp))


def test_exhaustive_tamper_rejection():
    rng = random.Random(9)
    payload = rng.randbytes(32)
    env = envelope.seal_envelope(KEY, payload, rng=rng)
    envelope.verify_envelope(KEY, env)

    def flipped(data, bit):
        out = bytearray(data)
        out[bit // 8] ^= 1 << (bit % 8)
        return bytes(out)

    rejections = 0
    for bit in range(len(payload) * 8):
        with pytest.raises(TagMismatch):
            envelope.verify_envelope(
                KEY, Envelope(flipped(payload, bit), env.tag, env.nonce, env.timestamp)
            )
        rejections += 1
    for bit in range(TAG_BYTES * 8):
        with pytest.raises(TagMismatch):
            envelope.verify_envelope(
                KEY, Envelope(payload, flipped(env.tag, bit), env.nonce, env.timestamp)
            )
        rejections += 1
    for bit in range(NONCE_BYTES * 8):
        with pytest.raises(TagMismatch):
            envelope.verify_envelope(
                KEY, Envelope(payload, env.tag, flipped(env.nonce, bit), env.timestamp)
            )
        rejections += 1
    assert rejections == 32 * 8 + TAG_BYTES * 8 + NONCE_BYTES * 8 == 896


def test_replay_cache():
    cache = set()
    env = envelope.seal_envelope(KEY, b"once")
    envelope.verify_envelope(KEY, env, replay_cache=cache)
    with pytest.raises(ReplayedNonce):
        envelope.verify_envelope(KEY, env, replay_cache=cache)
    # without a cache, re-verification is allowed
    envelope.verify_envelope(KEY, env)
    # a failed tag must not poison the cache
    bad = Envelope(b"tampered", env.tag, envelope.seal_envelope(KEY, b"z").nonce, env.timestamp)
    with pytest.raises(TagMismatch):
        envelope.verify_envelope(KEY, bad, replay_cache=cache)
    assert bad.nonce not in cache


def test_tag_compare_timing_smoke():
    # Rejection time must not depend on where the tag first differs.
    payload = bytes(1024)
    env = envelope.seal_envelope(KEY, payload)
    first = bytearray(env.tag)
    first[0] ^= 0xFF
    last = bytearray(env.tag)
    last[-1] ^= 0xFF

    def median_reject_time(tag):
        bad = Envelope(payload, bytes(tag), env.nonce, env.timestamp)
        samples = []
        for _ in range(60):
            t0 = time.perf_counter()
            with pytest.raises(TagMismatch):
                envelope.verify_envelope(KEY, bad)
            samples.append(time.perf_counter() - t0)
        samples.sort()
        return samples[len(samples) // 2]

    t_first, t_last = median_reject_time(first), median_reject_time(last)
    ratio = max(t_first, t_last) / min(t_first, t_last)
    assert ratio < 3.0, (t_first, t_last)


# ---------------------------------------------------------------------------
# file/wire encoding

def test_encode_decode_roundtrip():
    rng = random.Random(10)
    for length in (0, 1, 100, 2048):
        env = envelope.seal_envelope(KEY, rng.randbytes(length), rng=rng)
        blob = envelope.encode_envelope(env)
        assert envelope.decode_envelope(blob) == env


def test_encode_layout():
    nonce, tag = b"\x11" * NONCE_BYTES, b"\x22" * TAG_BYTES
    env = Envelope(b"ab", tag, nonce, "T")
    blob = envelope.encode_envelope(env)
    assert blob[:4] == struct.pack("<I", 2)
    assert blob[4:6] == b"ab"
    assert blob[6 : 6 + NONCE_BYTES] == nonce
    assert blob[6 + NONCE_BYTES : 6 + NONCE_BYTES + TAG_BYTES] == tag
    assert blob[-3:-1] == struct.pack("<H", 1)
    assert blob[-1:] == b"T"


def test_decode_rejects_malformed():
    env = envelope.seal_envelope(KEY, b"payload")
    blob = envelope.encode_envelope(env)
    with pytest.raises(MalformedEnvelope):
        envelope.decode_envelope(blob[:-1])  # truncated timestamp
    with pytest.raises(MalformedEnvelope):
        envelope.decode_envelope(blob + b"extra")
    with pytest.raises(MalformedEnvelope):
        envelope.decode_envelope(b"")
    with pytest.raises(MalformedEnvelope):
        envelope.decode_envelope(struct.pack("<I", 10**6) + b"short")


@given(blob=st.binary(min_size=0, max_size=300))
@settings(max_examples=200, deadline=None)
def test_decode_never_crashes(blob):
    try:
        env = envelope.decode_envelope(blob)
    except MalformedEnvelope:
        return
    # decodable inputs re-encode to the same bytes
    assert envelope.encode_envelope(env) == blob
