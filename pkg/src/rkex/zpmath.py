"""Exact arithmetic for rectangular matrices over Z_p (p prime).

Provides the carrier type ``ZpMatrix`` plus sampling, multiplication,
transpose, determinant, and rank over the prime field.  Entries are
stored as unsigned 64-bit values; moduli up to 2**64 are supported.
For p below 2**32 the heavy kernels dispatch to a selectable backend
(numba-compiled loops or vectorized numpy); larger moduli fall back to
exact Python-integer arithmetic, since per-term products no longer fit
in 64 bits.
"""

from __future__ import annotations

import operator
import struct
from functools import lru_cache
from typing import Tuple

import numpy as np

from rkex import _backends

__all__ = [
    "FAST_MODULUS_LIMIT",
    "ZpMatrix",
    "check_modulus",
    "decode_matrix",
    "det_mod",
    "encode_matrix",
    "identity",
    "is_prime",
    "mat_mul_mod",
    "rank_mod",
    "sample_matrix",
    "transpose",
]

# Above this the backend kernels would overflow their 64-bit products;
# arithmetic switches to exact Python integers.
FAST_MODULUS_LIMIT = 1 << 32

_MATRIX_HEADER = struct.Struct("<II")

# Witness set proving primality deterministically for every n < 2**64.
_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


@lru_cache(maxsize=1024)
def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin primality test for 0 <= n < 2**64."""
    if n < 2:
        return False
    for small in _MR_WITNESSES:
        if n == small:
            return True
        if n % small == 0:
            return False
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def check_modulus(p: int) -> int:
    """Validate a prime modulus: odd prime with 3 <= p < 2**64."""
    if not isinstance(p, (int, np.integer)):
        raise TypeError(f"modulus must be an integer, got {type(p).__name__}")
    p = int(p)
    if p < 3:
        raise ValueError(f"modulus must be at least 3, got {p}")
    if p >= 1 << 64:
        raise ValueError(f"modulus must be below 2**64, got {p}")
    if not is_prime(p):
        raise ValueError(f"modulus must be prime, got {p}")
    return p


class ZpMatrix:
    """Immutable rectangular matrix with entries in [0, p-1].

    ``data`` is held as a read-only uint64 ndarray.  Equality compares
    modulus and entries exactly.
    """

    __slots__ = ("data", "p")

    def __init__(self, data, p: int):
        p = check_modulus(p)
        if isinstance(data, np.ndarray) and data.dtype != object:
            arr = self._from_ndarray(data, p)
        else:
            # Lists, tuples, object arrays: read entries as exact Python
            # ints.  (Plain np.asarray would degrade entries >= 2**63 to
            # float64 and lose low bits.)
            arr = self._from_pyobjects(data, p)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "p", p)

    @staticmethod
    def _check_shape(arr) -> None:
        if arr.ndim != 2:
            raise ValueError(f"matrix must be 2-dimensional, got ndim={arr.ndim}")
        rows, cols = arr.shape
        if rows < 1 or cols < 1:
            raise ValueError(f"matrix dimensions must be positive, got {rows}x{cols}")

    @classmethod
    def _from_ndarray(cls, arr: np.ndarray, p: int) -> np.ndarray:
        cls._check_shape(arr)
        if arr.dtype == np.uint64:
            arr = arr.copy()
        elif np.issubdtype(arr.dtype, np.unsignedinteger):
            arr = arr.astype(np.uint64)
        elif np.issubdtype(arr.dtype, np.signedinteger):
            # Reject negatives before the unsigned conversion can wrap them.
            if int(arr.min()) < 0:
                raise ValueError("matrix entries must be nonnegative")
            arr = arr.astype(np.uint64)
        else:
            raise TypeError(f"matrix entries must be integers, got dtype {arr.dtype}")
        if int(arr.max()) >= p:
            raise ValueError(f"matrix entries must be below the modulus {p}")
        return arr

    @classmethod
    def _from_pyobjects(cls, data, p: int) -> np.ndarray:
        obj = np.asarray(data, dtype=object)
        cls._check_shape(obj)
        values = []
        for row in obj:
            converted = []
            for v in row:
                try:
                    v = operator.index(v)
                except TypeError:
                    raise TypeError(
                        f"matrix entries must be integers, got {type(v).__name__}"
                    ) from None
                if v < 0:
                    raise ValueError("matrix entries must be nonnegative")
                if v >= p:
                    raise ValueError(f"matrix entries must be below the modulus {p}")
                converted.append(v)
            values.append(converted)
        return np.array(values, dtype=np.uint64)

    def __setattr__(self, name, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ZpMatrix):
            return NotImplemented
        return self.p == other.p and np.array_equal(self.data, other.data)

    def __hash__(self):
        return hash((self.p, self.data.shape, self.data.tobytes()))

    def __repr__(self) -> str:
        return f"ZpMatrix({self.data.tolist()!r}, p={self.p})"

    def tolist(self):
        return [[int(v) for v in row] for row in self.data]


def identity(n: int, p: int) -> ZpMatrix:
    """The n-by-n identity matrix over Z_p."""
    if n < 1:
        raise ValueError(f"identity size must be positive, got {n}")
    return ZpMatrix(np.eye(n, dtype=np.uint64), p)


def _sample_uniform(span: int, count: int, rng) -> np.ndarray:
    """Draw ``count`` exact-uniform integers in [0, span) from ``rng``.

    Rejection sampling over the smallest covering power of two, pulled
    from ``rng.getrandbits`` in bulk.  Works identically for
    ``secrets.SystemRandom`` and a seeded ``random.Random``.
    """
    nbits = max(span - 1, 1).bit_length()
    nbytes = (nbits + 7) // 8
    mask = (1 << nbits) - 1
    out = np.empty(count, dtype=np.uint64)
    filled = 0
    while filled < count:
        want = count - filled
        # Oversample to amortize the Python-level loop.
        draw = want + (want >> 2) + 16
        raw = rng.getrandbits(draw * nbytes * 8).to_bytes(draw * nbytes, "little")
        chunks = np.frombuffer(raw, dtype=np.uint8).reshape(draw, nbytes)
        vals = np.zeros(draw, dtype=np.uint64)
        for i in range(nbytes):
            vals |= chunks[:, i].astype(np.uint64) << np.uint64(8 * i)
        vals &= np.uint64(mask)
        vals = vals[vals < span]
        take = min(want, vals.size)
        out[filled : filled + take] = vals[:take]
        filled += take
    return out


def sample_matrix(rows: int, cols: int, p: int, rng) -> ZpMatrix:
    """Sample a rows-by-cols matrix with entries uniform on [(p-1)/2, p-1].

    ``rng`` must expose ``getrandbits`` (e.g. ``secrets.SystemRandom()``).
    Entries are mutually independent and exactly uniform via rejection
    sampling.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dimensions must be positive, got {rows}x{cols}")
    p = check_modulus(p)
    lo = (p - 1) // 2
    span = p - lo
    vals = _sample_uniform(span, rows * cols, rng) + np.uint64(lo)
    mat = ZpMatrix.__new__(ZpMatrix)
    arr = vals.reshape(rows, cols)
    arr.flags.writeable = False
    object.__setattr__(mat, "data", arr)
    object.__setattr__(mat, "p", p)
    return mat


def _require_same_modulus(a: ZpMatrix, b: ZpMatrix) -> None:
    if a.p != b.p:
        raise ValueError(f"modulus mismatch: {a.p} != {b.p}")


def _matmul_big(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    prod = a.astype(object) @ b.astype(object) % p
    return np.array([[int(v) for v in row] for row in prod], dtype=np.uint64)


def _det_big(mat: np.ndarray, p: int) -> int:
    n = mat.shape[0]
    m = [[int(v) for v in row] for row in mat]
    det = 1
    sign = 1
    for col in range(n):
        piv = next((r for r in range(col, n) if m[r][col]), None)
        if piv is None:
            return 0
        if piv != col:
            m[col], m[piv] = m[piv], m[col]
            sign = -sign
        pivot = m[col][col]
        det = det * pivot % p
        inv = pow(pivot, -1, p)
        for r in range(col + 1, n):
            factor = m[r][col] * inv % p
            if factor:
                row_r, row_c = m[r], m[col]
                for c in range(col, n):
                    row_r[c] = (row_r[c] - factor * row_c[c]) % p
    return det % p if sign == 1 else (p - det) % p


def _rank_big(mat: np.ndarray, p: int) -> int:
    rows, cols = mat.shape
    m = [[int(v) for v in row] for row in mat]
    rank = 0
    for col in range(cols):
        if rank == rows:
            break
        piv = next((r for r in range(rank, rows) if m[r][col]), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        inv = pow(m[rank][col], -1, p)
        for r in range(rank + 1, rows):
            factor = m[r][col] * inv % p
            if factor:
                row_r, row_p = m[r], m[rank]
                for c in range(col, cols):
                    row_r[c] = (row_r[c] - factor * row_p[c]) % p
        rank += 1
    return rank


def mat_mul_mod(a: ZpMatrix, b: ZpMatrix) -> ZpMatrix:
    """Matrix product reduced mod p; exact for every supported modulus."""
    _require_same_modulus(a, b)
    if a.cols != b.rows:
        raise ValueError(
            f"dimension mismatch: {a.rows}x{a.cols} times {b.rows}x{b.cols}"
        )
    if a.p < FAST_MODULUS_LIMIT:
        out = _backends.get_backend().matmul_mod(a.data, b.data, a.p)
    else:
        out = _matmul_big(a.data, b.data, a.p)
    mat = ZpMatrix.__new__(ZpMatrix)
    out.flags.writeable = False
    object.__setattr__(mat, "data", out)
    object.__setattr__(mat, "p", a.p)
    return mat


def transpose(m: ZpMatrix) -> ZpMatrix:
    """Transpose; result(j, i) = m(i, j)."""
    mat = ZpMatrix.__new__(ZpMatrix)
    arr = np.ascontiguousarray(m.data.T)
    arr.flags.writeable = False
    object.__setattr__(mat, "data", arr)
    object.__setattr__(mat, "p", m.p)
    return mat


def det_mod(m: ZpMatrix) -> int:
    """Determinant over Z_p by Gaussian elimination with modular inverses.

    Returns an integer in [0, p-1]; 0 for singular matrices.
    """
    if m.rows != m.cols:
        raise ValueError(f"determinant requires a square matrix, got {m.rows}x{m.cols}")
    if m.p < FAST_MODULUS_LIMIT:
        return _backends.get_backend().det_mod(m.data, m.p)
    return _det_big(m.data, m.p)


def rank_mod(m: ZpMatrix) -> int:
    """Rank of m over the field Z_p, by Gaussian elimination."""
    if m.p < FAST_MODULUS_LIMIT:
        return _backends.get_backend().rank_mod(m.data, m.p)
    return _rank_big(m.data, m.p)


def encode_matrix(m: ZpMatrix) -> bytes:
    """Serialize: row count (4 LE), column count (4 LE), entries (8 LE each, row-major)."""
    return _MATRIX_HEADER.pack(m.rows, m.cols) + m.data.astype("<u8").tobytes()


def decode_matrix(buf: bytes, p: int, offset: int = 0) -> Tuple[ZpMatrix, int]:
    """Parse one serialized matrix from ``buf`` at ``offset``.

    Returns the matrix and the offset just past it.  Raises ValueError
    on truncation, zero dimensions, or entries at or above the modulus.
    """
    if len(buf) - offset < _MATRIX_HEADER.size:
        raise ValueError("truncated matrix header")
    rows, cols = _MATRIX_HEADER.unpack_from(buf, offset)
    offset += _MATRIX_HEADER.size
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix dimensions must be positive, got {rows}x{cols}")
    nbytes = rows * cols * 8
    if len(buf) - offset < nbytes:
        raise ValueError("truncated matrix body")
    entries = np.frombuffer(buf, dtype="<u8", count=rows * cols, offset=offset)
    return ZpMatrix(entries.reshape(rows, cols).astype(np.uint64), p), offset + nbytes
