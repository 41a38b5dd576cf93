"""Pure-numpy vectorized kernels for the fast modulus range (p < 2**32).

Every entry is stored as uint64 and already reduced mod p, so a single
product stays below 2**64 and per-term reduction keeps the running sums
below 2**64 as well.  Callers guarantee p < 2**32.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"

# keep the broadcast product below ~128 MiB per row block
_BLOCK_CELLS = 1 << 24

_WORD_MASK = np.uint64(0xFFFFFFFF)


def matmul_mod(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    p64 = np.uint64(p)
    m, inner = a.shape
    n = b.shape[1]
    out = np.empty((m, n), dtype=np.uint64)
    rows_per_block = max(1, _BLOCK_CELLS // max(1, inner * n))
    for start in range(0, m, rows_per_block):
        stop = min(start + rows_per_block, m)
        prod = (a[start:stop, :, None] * b[None, :, :]) % p64
        out[start:stop] = prod.sum(axis=1) % p64
    return out


def det_mod(mat: np.ndarray, p: int) -> int:
    p64 = np.uint64(p)
    m = mat.copy()
    n = m.shape[0]
    det = 1
    negate = False
    for col in range(n):
        nz = np.nonzero(m[col:, col])[0]
        if nz.size == 0:
            return 0
        piv = col + int(nz[0])
        if piv != col:
            m[[col, piv]] = m[[piv, col]]
            negate = not negate
        pivot = int(m[col, col])
        det = det * pivot % p
        if col + 1 < n:
            inv = np.uint64(pow(pivot, -1, p))
            below = m[col + 1:, col:]
            factors = below[:, 0] * inv % p64
            below[:] = (below + (p64 - factors)[:, None] * m[col, col:][None, :]) % p64
    if negate:
        det = (p - det) % p
    return det


def rank_mod(mat: np.ndarray, p: int) -> int:
    p64 = np.uint64(p)
    m = mat.copy()
    rows, cols = m.shape
    rank = 0
    for col in range(cols):
        if rank == rows:
            break
        nz = np.nonzero(m[rank:, col])[0]
        if nz.size == 0:
            continue
        piv = rank + int(nz[0])
        if piv != rank:
            m[[rank, piv]] = m[[piv, rank]]
        inv = np.uint64(pow(int(m[rank, col]), -1, p))
        below = m[rank + 1:, col:]
        if below.shape[0]:
            factors = below[:, 0] * inv % p64
            below[:] = (below + (p64 - factors)[:, None] * m[rank, col:][None, :]) % p64
        rank += 1
    return rank


def nh_sum(m_words: np.ndarray, k_words: np.ndarray) -> int:
    # (m + k mod 2**32) pair products accumulated mod 2**64: uint64
    # wraparound gives both reductions for free
    s = (m_words + k_words) & _WORD_MASK
    return int((s[0::2] * s[1::2]).sum(dtype=np.uint64))
