"""Matrix arithmetic over Z_p: known answers, properties, serialization."""

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rkex import _backends, zpmath
from rkex.zpmath import ZpMatrix

import vectors

PRIMES = [7, 101, 5303, 2**31 - 1]
BIG_PRIME = 18446744073709551113  # above the fast-kernel limit


def random_matrix(rows, cols, p, rng):
    return ZpMatrix(
        [[rng.randrange(p) for _ in range(cols)] for _ in range(rows)], p
    )


# ---------------------------------------------------------------------------
# modulus validation

def test_is_prime_known_values():
    assert zpmath.is_prime(2)
    assert zpmath.is_prime(3)
    assert zpmath.is_prime(5303)
    assert zpmath.is_prime(2**31 - 1)
    assert zpmath.is_prime(BIG_PRIME)
    assert not zpmath.is_prime(1)
    assert not zpmath.is_prime(5304)
    assert not zpmath.is_prime(2**31)
    # strong-pseudoprime stress: Carmichael numbers
    assert not zpmath.is_prime(561)
    assert not zpmath.is_prime(41041)


@pytest.mark.parametrize("bad", [0, 1, 2, 4, 9, 5304, 2**64, 2**64 + 13])
def test_check_modulus_rejects(bad):
    with pytest.raises(ValueError):
        zpmath.check_modulus(bad)


def test_check_modulus_rejects_non_integer():
    with pytest.raises(TypeError):
        zpmath.check_modulus(7.0)


# ---------------------------------------------------------------------------
# ZpMatrix construction

def test_matrix_validates_entries():
    with pytest.raises(ValueError):
        ZpMatrix([[7]], 7)  # entry == p
    with pytest.raises(ValueError):
        ZpMatrix([[-1]], 7)  # negative must not wrap through uint64
    with pytest.raises(ValueError):
        ZpMatrix(np.array([[-1]], dtype=np.int64), 2**61 - 1)
    with pytest.raises(ValueError):
        ZpMatrix(np.zeros((0, 3), dtype=np.uint64), 7)
    with pytest.raises(ValueError):
        ZpMatrix(np.zeros(4, dtype=np.uint64), 7)  # 1-D input
    with pytest.raises(TypeError):
        ZpMatrix(np.zeros((2, 2)), 7)  # float dtype


def test_matrix_is_immutable():
    m = ZpMatrix([[1, 2], [3, 4]], 7)
    with pytest.raises(ValueError):
        m.data[0, 0] = 5
    with pytest.raises(AttributeError):
        m.p = 11


def test_matrix_equality():
    a = ZpMatrix([[1, 2]], 7)
    assert a == ZpMatrix([[1, 2]], 7)
    assert a != ZpMatrix([[1, 3]], 7)
    assert a != ZpMatrix([[1, 2]], 11)
    assert a != [[1, 2]]


# ---------------------------------------------------------------------------
# sampling

def test_sample_range_tiny(rng):
    # p=5: interval floor is (p-1)/2 = 2, so entries lie in {2, 3, 4}
    seen = set()
    for _ in range(200):
        m = zpmath.sample_matrix(1, 1, 5, rng)
        seen.add(int(m.data[0, 0]))
    assert seen == {2, 3, 4}


def test_sample_range_toy(rng):
    m = zpmath.sample_matrix(3, 2, 5303, rng)
    assert m.rows == 3 and m.cols == 2
    assert int(m.data.min()) >= 2651
    assert int(m.data.max()) <= 5302


def test_sample_rejects_zero_dims(rng):
    with pytest.raises(ValueError):
        zpmath.sample_matrix(0, 3, 7, rng)
    with pytest.raises(ValueError):
        zpmath.sample_matrix(3, 0, 7, rng)


def test_sample_uniformity_chi_square():
    # p=7: values {3,4,5,6}; chi-square over 10^5 draws at significance 0.01
    from scipy import stats

    rng = random.Random(20260816)
    draws = zpmath.sample_matrix(200, 500, 7, rng).data.ravel()
    counts = [int((draws == v).sum()) for v in (3, 4, 5, 6)]
    assert sum(counts) == 100_000
    _, pvalue = stats.chisquare(counts)
    assert pvalue > 0.01, counts


def test_sample_large_prime_range(rng):
    m = zpmath.sample_matrix(2, 2, BIG_PRIME, rng)
    lo = (BIG_PRIME - 1) // 2
    assert all(lo <= int(v) < BIG_PRIME for v in m.data.ravel())


# ---------------------------------------------------------------------------
# multiplication

def test_mat_mul_known_answer_toy(backend, alice_secret, alice_share):
    u1 = alice_share.mats[0]
    assert u1.tolist() == vectors.U1
    assert u1.tolist()[0][0] == 1707
    assert u1.tolist()[0][1] == 4410
    assert u1.tolist()[2][2] == 2883


def test_mat_mul_identity(backend, rng):
    m = random_matrix(2, 2, 101, rng)
    assert zpmath.mat_mul_mod(zpmath.identity(2, 101), m) == m
    assert zpmath.mat_mul_mod(m, zpmath.identity(2, 101)) == m


def test_mat_mul_one_by_one(backend):
    out = zpmath.mat_mul_mod(ZpMatrix([[3]], 7), ZpMatrix([[4]], 7))
    assert out.tolist() == [[5]]


def test_mat_mul_dimension_mismatch():
    with pytest.raises(ValueError):
        zpmath.mat_mul_mod(ZpMatrix([[1, 2]], 7), ZpMatrix([[1, 2]], 7))


def test_mat_mul_modulus_mismatch():
    with pytest.raises(ValueError):
        zpmath.mat_mul_mod(ZpMatrix([[1]], 7), ZpMatrix([[1]], 11))


def test_mat_mul_no_overflow_near_word_limit(backend):
    # Worst case for the fast path: entries just below 2**32.
    p = 4294967291  # largest prime below 2**32
    a = ZpMatrix([[p - 1] * 8], p)
    b = ZpMatrix([[p - 1]] * 8, p)
    expected = (8 * (p - 1) * (p - 1)) % p
    assert zpmath.mat_mul_mod(a, b).tolist() == [[expected]]


def test_mat_mul_big_prime_matches_python_ints(rng):
    p = BIG_PRIME
    a = random_matrix(3, 2, p, rng)
    b = random_matrix(2, 3, p, rng)
    out = zpmath.mat_mul_mod(a, b)
    la, lb = a.tolist(), b.tolist()
    expected = [
        [sum(la[i][k] * lb[k][j] for k in range(2)) % p for j in range(3)]
        for i in range(3)
    ]
    assert out.tolist() == expected


def test_mat_mul_associative(backend, rng):
    for p in PRIMES:
        a = random_matrix(3, 4, p, rng)
        b = random_matrix(4, 2, p, rng)
        c = random_matrix(2, 5, p, rng)
        left = zpmath.mat_mul_mod(zpmath.mat_mul_mod(a, b), c)
        right = zpmath.mat_mul_mod(a, zpmath.mat_mul_mod(b, c))
        assert left == right


# ---------------------------------------------------------------------------
# transpose

def test_transpose_shape_and_entries():
    m = ZpMatrix([[1, 2], [3, 4], [5, 6]], 7)
    mt = zpmath.transpose(m)
    assert (mt.rows, mt.cols) == (2, 3)
    assert mt.tolist() == [[1, 3, 5], [2, 4, 6]]


def test_transpose_involution(rng):
    m = random_matrix(4, 7, 101, rng)
    assert zpmath.transpose(zpmath.transpose(m)) == m


def test_transpose_toy_first_row(alice_secret):
    a1 = alice_secret.pairs[0][0]
    assert zpmath.transpose(a1).tolist()[0] == vectors.ALICE_A1_T_ROW0


# ---------------------------------------------------------------------------
# determinant and rank

def _cofactor_det(rows, p):
    n = len(rows)
    if n == 1:
        return rows[0][0] % p
    total = 0
    for j in range(n):
        minor = [r[:j] + r[j + 1 :] for r in rows[1:]]
        sign = -1 if j % 2 else 1
        total += sign * rows[0][j] * _cofactor_det(minor, p)
    return total % p


def test_det_identity(backend):
    for n in (1, 2, 5):
        for p in (7, 5303, 2**31 - 1):
            assert zpmath.det_mod(zpmath.identity(n, p)) == 1


def test_det_known_answer(backend):
    assert zpmath.det_mod(ZpMatrix([[2, 3], [1, 4]], 7)) == 5


def test_det_rejects_non_square():
    with pytest.raises(ValueError):
        zpmath.det_mod(ZpMatrix([[1, 2, 3], [4, 5, 6]], 7))


def test_det_share_matrices_singular(backend, alice_share, bob_share):
    for share in (alice_share, bob_share):
        for m in share.mats:
            assert zpmath.det_mod(m) == 0


def test_det_matches_cofactor_oracle(backend, rng):
    for _ in range(250):
        p = rng.choice(PRIMES)
        n = rng.randrange(1, 5)
        m = random_matrix(n, n, p, rng)
        assert zpmath.det_mod(m) == _cofactor_det(m.tolist(), p)


def test_det_transpose_invariant(backend, rng):
    for _ in range(250):
        p = rng.choice(PRIMES)
        n = rng.randrange(1, 9)
        m = random_matrix(n, n, p, rng)
        assert zpmath.det_mod(zpmath.transpose(m)) == zpmath.det_mod(m)


def test_det_multiplicative(backend, rng):
    for _ in range(250):
        p = rng.choice(PRIMES)
        n = rng.randrange(1, 7)
        x = random_matrix(n, n, p, rng)
        y = random_matrix(n, n, p, rng)
        lhs = zpmath.det_mod(zpmath.mat_mul_mod(x, y))
        assert lhs == zpmath.det_mod(x) * zpmath.det_mod(y) % p


def test_det_tall_times_wide_always_zero(backend, rng):
    for _ in range(250):
        p = rng.choice(PRIMES)
        c = rng.randrange(1, 4)
        r = rng.randrange(c + 1, c + 4)
        a = random_matrix(r, c, p, rng)
        b = random_matrix(c, r, p, rng)
        assert zpmath.det_mod(zpmath.mat_mul_mod(a, b)) == 0


def test_det_big_prime_matches_cofactor(rng):
    for _ in range(20):
        n = rng.randrange(1, 5)
        m = random_matrix(n, n, BIG_PRIME, rng)
        assert zpmath.det_mod(m) == _cofactor_det(m.tolist(), BIG_PRIME)


def test_rank_known_cases(backend):
    assert zpmath.rank_mod(zpmath.identity(4, 7)) == 4
    assert zpmath.rank_mod(ZpMatrix([[0, 0], [0, 0]], 7)) == 0
    assert zpmath.rank_mod(ZpMatrix([[1, 2], [2, 4]], 7)) == 1  # second row = 2x first
    assert zpmath.rank_mod(ZpMatrix([[1, 2, 3], [4, 5, 6]], 7)) == 2


def test_rank_bounded_by_factor_width(backend, rng):
    for _ in range(100):
        p = rng.choice(PRIMES)
        c = rng.randrange(1, 4)
        r = rng.randrange(c + 1, c + 4)
        prod = zpmath.mat_mul_mod(random_matrix(r, c, p, rng), random_matrix(c, r, p, rng))
        assert zpmath.rank_mod(prod) <= c


def test_rank_big_prime():
    m = ZpMatrix([[1, 2], [2, 4]], BIG_PRIME)
    assert zpmath.rank_mod(m) == 1


# ---------------------------------------------------------------------------
# backend agreement

@pytest.mark.skipif(
    len(_backends.available_backends()) < 2, reason="only one backend available"
)
@given(
    rows=st.integers(1, 5),
    cols=st.integers(1, 5),
    seed=st.integers(0, 2**32 - 1),
    p=st.sampled_from(PRIMES),
)
@settings(max_examples=40, deadline=None)
def test_backends_agree(rows, cols, seed, p):
    names = _backends.available_backends()
    rng = random.Random(seed)
    a = random_matrix(rows, cols, p, rng)
    b = random_matrix(cols, rows, p, rng)
    sq = random_matrix(rows, rows, p, rng)
    results = []
    for name in names:
        with _backends.use_backend(name):
            results.append(
                (
                    zpmath.mat_mul_mod(a, b).tolist(),
                    zpmath.det_mod(sq),
                    zpmath.rank_mod(a),
                )
            )
    assert all(r == results[0] for r in results[1:])


# ---------------------------------------------------------------------------
# serialization

def test_matrix_roundtrip(rng):
    for p in PRIMES + [BIG_PRIME]:
        m = random_matrix(3, 2, p, rng)
        blob = zpmath.encode_matrix(m)
        assert len(blob) == 8 + 6 * 8
        decoded, consumed = zpmath.decode_matrix(blob, p)
        assert consumed == len(blob)
        assert decoded == m


def test_decode_matrix_rejects_truncation():
    m = ZpMatrix([[1, 2], [3, 4]], 7)
    blob = zpmath.encode_matrix(m)
    for cut in (0, 4, len(blob) - 1):
        with pytest.raises(ValueError):
            zpmath.decode_matrix(blob[:cut], 7)


def test_decode_matrix_rejects_big_entries():
    blob = zpmath.encode_matrix(ZpMatrix([[6]], 7))
    with pytest.raises(ValueError):
        zpmath.decode_matrix(blob, 5)  # entry 6 is out of range mod 5


def test_decode_matrix_rejects_zero_dims():
    import struct

    with pytest.raises(ValueError):
        zpmath.decode_matrix(struct.pack("<II", 0, 3), 7)
