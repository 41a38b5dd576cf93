"""Numba @njit kernels for the fast modulus range (p < 2**32).

Same contracts as the numpy backend: uint64 matrices reduced mod p,
p < 2**32 so per-term reduction never overflows the 64-bit accumulators.
All scalars are kept uint64 (mixing in a signed int would silently
promote the arithmetic to float64 inside numba).
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

NAME = "numba"

_ZERO = uint64(0)
_ONE = uint64(1)
_WORD_MASK = uint64(0xFFFFFFFF)


@njit(cache=True)
def _matmul_mod(a, b, p):
    m, inner = a.shape
    n = b.shape[1]
    out = np.empty((m, n), dtype=np.uint64)
    for i in range(m):
        for j in range(n):
            acc = _ZERO
            for k in range(inner):
                acc = (acc + a[i, k] * b[k, j] % p) % p
            out[i, j] = acc
    return out


@njit(cache=True)
def _pow_mod(base, exp, p):
    result = _ONE
    b = base % p
    e = exp
    while e > _ZERO:
        if e & _ONE:
            result = result * b % p
        b = b * b % p
        e >>= _ONE
    return result


@njit(cache=True)
def _det_mod(mat, p):
    n = mat.shape[0]
    m = mat.copy()
    det = _ONE
    negate = False
    for col in range(n):
        piv = -1
        for r in range(col, n):
            if m[r, col] != _ZERO:
                piv = r
                break
        if piv < 0:
            return _ZERO
        if piv != col:
            for c in range(col, n):
                tmp = m[col, c]
                m[col, c] = m[piv, c]
                m[piv, c] = tmp
            negate = not negate
        pivot = m[col, col]
        det = det * pivot % p
        if col + 1 < n:
            inv = _pow_mod(pivot, p - uint64(2), p)
            for r in range(col + 1, n):
                factor = m[r, col] * inv % p
                if factor != _ZERO:
                    neg = p - factor
                    for c in range(col, n):
                        m[r, c] = (m[r, c] + neg * m[col, c]) % p
    if negate:
        return (p - det) % p
    return det


@njit(cache=True)
def _rank_mod(mat, p):
    rows, cols = mat.shape
    m = mat.copy()
    rank = 0
    for col in range(cols):
        if rank == rows:
            break
        piv = -1
        for r in range(rank, rows):
            if m[r, col] != _ZERO:
                piv = r
                break
        if piv < 0:
            continue
        if piv != rank:
            for c in range(col, cols):
                tmp = m[rank, c]
                m[rank, c] = m[piv, c]
                m[piv, c] = tmp
        inv = _pow_mod(m[rank, col], p - uint64(2), p)
        for r in range(rank + 1, rows):
            factor = m[r, col] * inv % p
            if factor != _ZERO:
                neg = p - factor
                for c in range(col, cols):
                    m[r, c] = (m[r, c] + neg * m[rank, c]) % p
        rank += 1
    return rank


@njit(cache=True)
def _nh_sum(m_words, k_words):
    acc = _ZERO
    for i in range(0, m_words.shape[0], 2):
        x = (m_words[i] + k_words[i]) & _WORD_MASK
        y = (m_words[i + 1] + k_words[i + 1]) & _WORD_MASK
        acc += x * y
    return acc


def matmul_mod(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    return _matmul_mod(a, b, np.uint64(p))


def det_mod(mat: np.ndarray, p: int) -> int:
    return int(_det_mod(mat, np.uint64(p)))


def rank_mod(mat: np.ndarray, p: int) -> int:
    return int(_rank_mod(mat, np.uint64(p)))


def nh_sum(m_words: np.ndarray, k_words: np.ndarray) -> int:
    return int(_nh_sum(m_words, k_words))
