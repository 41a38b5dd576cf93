"""Matrix key-agreement sessions.

Each party samples t pairs of rectangular secret matrices over Z_p,
publishes the per-cycle products, and derives a shared key component
from the counterpart's public share:

    component_k = det(A_k^T . V_k . B_k^T) mod p

The t components, concatenated as minimal decimal ASCII, are hashed
with SHA3-512 into the 64-byte session key.  Both parties arrive at the
same components, so the digests agree.
"""

from __future__ import annotations

import hashlib
import operator
import warnings
from dataclasses import dataclass, field
from typing import Sequence, Tuple

from rkex import zpmath
from rkex.zpmath import ZpMatrix

__all__ = [
    "HASH_SHA3_512",
    "ParamAdvisoryWarning",
    "ParamSet",
    "PartySecret",
    "PublicShare",
    "SessionKey",
    "derive_components",
    "derive_session_key",
    "finalize_key",
    "new_session",
    "random_param_set",
    "share_from_secret",
]

HASH_SHA3_512 = "sha3-512"

_SUPPORTED_HASHES = (HASH_SHA3_512,)

# Recommended operating ranges; configurations outside them still work
# (the test fixtures use a 3x2 toy) but carry reduced security margins.
ADVISORY_ROWS = (5, 100)
ADVISORY_COLS_MIN = 4


class ParamAdvisoryWarning(UserWarning):
    """Parameters are valid but outside the recommended operating range."""


@dataclass(frozen=True)
class ParamSet:
    """Shared public configuration for one exchange.

    ``rows_a`` and ``cols_a`` are the dimensions of each party's A
    matrices; the B matrices are transposed-shape (cols_a x rows_a), so
    only the A dimensions are stored.
    """

    p: int
    rows_a: int
    cols_a: int
    t: int
    hash_id: str = HASH_SHA3_512

    def __post_init__(self):
        object.__setattr__(self, "p", zpmath.check_modulus(self.p))
        for name in ("rows_a", "cols_a", "t"):
            try:
                value = operator.index(getattr(self, name))
            except TypeError:
                raise ValueError(
                    f"{name} must be a positive integer, got {getattr(self, name)!r}"
                ) from None
            if value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value}")
            object.__setattr__(self, name, value)
        if self.rows_a <= self.cols_a:
            raise ValueError(
                f"rows_a must exceed cols_a, got {self.rows_a}x{self.cols_a}"
            )
        if self.hash_id not in _SUPPORTED_HASHES:
            raise ValueError(f"unsupported hash {self.hash_id!r}")
        lo, hi = ADVISORY_ROWS
        if not lo <= self.rows_a <= hi:
            warnings.warn(
                f"rows_a={self.rows_a} outside the recommended range [{lo}, {hi}]",
                ParamAdvisoryWarning,
                stacklevel=2,
            )
        if self.cols_a < ADVISORY_COLS_MIN:
            warnings.warn(
                f"cols_a={self.cols_a} below the recommended minimum {ADVISORY_COLS_MIN}",
                ParamAdvisoryWarning,
                stacklevel=2,
            )

    @property
    def rows_b(self) -> int:
        return self.cols_a

    @property
    def cols_b(self) -> int:
        return self.rows_a


@dataclass(frozen=True)
class PartySecret:
    """One party's private per-session matrices: t pairs (A_k, B_k)."""

    params: ParamSet
    pairs: Tuple[Tuple[ZpMatrix, ZpMatrix], ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(tuple(pair) for pair in self.pairs))
        ps = self.params
        if len(self.pairs) != ps.t:
            raise ValueError(f"expected {ps.t} matrix pairs, got {len(self.pairs)}")
        for k, (a, b) in enumerate(self.pairs):
            if a.p != ps.p or b.p != ps.p:
                raise ValueError(f"pair {k} has a modulus other than {ps.p}")
            if (a.rows, a.cols) != (ps.rows_a, ps.cols_a):
                raise ValueError(
                    f"pair {k}: A is {a.rows}x{a.cols}, expected {ps.rows_a}x{ps.cols_a}"
                )
            if (b.rows, b.cols) != (ps.rows_b, ps.cols_b):
                raise ValueError(
                    f"pair {k}: B is {b.rows}x{b.cols}, expected {ps.rows_b}x{ps.cols_b}"
                )


@dataclass(frozen=True)
class PublicShare:
    """The transmitted vector of t square (rows_a x rows_a) matrices."""

    params: ParamSet
    mats: Tuple[ZpMatrix, ...]

    def __post_init__(self):
        object.__setattr__(self, "mats", tuple(self.mats))
        ps = self.params
        if len(self.mats) != ps.t:
            raise ValueError(f"expected {ps.t} share matrices, got {len(self.mats)}")
        for k, m in enumerate(self.mats):
            if m.p != ps.p:
                raise ValueError(f"share matrix {k} has a modulus other than {ps.p}")
            if (m.rows, m.cols) != (ps.rows_a, ps.rows_a):
                raise ValueError(
                    f"share matrix {k} is {m.rows}x{m.cols}, expected "
                    f"{ps.rows_a}x{ps.rows_a}"
                )


@dataclass(frozen=True)
class SessionKey:
    """Derived shared secret: per-cycle components, their encoding, digest."""

    components: Tuple[int, ...]
    concat: bytes
    digest: bytes = field(repr=False)

    def hex(self) -> str:
        return self.digest.hex()


def new_session(params: ParamSet, rng) -> Tuple[PartySecret, PublicShare]:
    """Sample a fresh secret and compute the matching public share."""
    pairs = []
    for _ in range(params.t):
        a = zpmath.sample_matrix(params.rows_a, params.cols_a, params.p, rng)
        b = zpmath.sample_matrix(params.rows_b, params.cols_b, params.p, rng)
        pairs.append((a, b))
    secret = PartySecret(params, tuple(pairs))
    return secret, share_from_secret(secret)


def share_from_secret(secret: PartySecret) -> PublicShare:
    """The public share for a secret: mats[k] = A_k . B_k mod p."""
    mats = tuple(zpmath.mat_mul_mod(a, b) for a, b in secret.pairs)
    return PublicShare(secret.params, mats)


def derive_components(secret: PartySecret, other_share: PublicShare) -> Tuple[int, ...]:
    """Per-cycle key components from our secret and the counterpart's share.

    component_k = det(A_k^T . other.mats[k] . B_k^T) mod p, an integer
    in [0, p-1].  Both parties compute the same values.
    """
    if other_share.params != secret.params:
        raise ValueError(
            f"parameter mismatch: share carries {other_share.params}, "
            f"secret expects {secret.params}"
        )
    return tuple(
        zpmath.det_mod(
            zpmath.mat_mul_mod(
                zpmath.mat_mul_mod(zpmath.transpose(a), v), zpmath.transpose(b)
            )
        )
        for (a, b), v in zip(secret.pairs, other_share.mats)
    )


def finalize_key(components: Sequence[int]) -> SessionKey:
    """Hash the decimal-ASCII concatenation of the components.

    Components are written in cycle order as minimal decimal strings
    with no separators or padding (3207, 2121 -> b"32072121"), then
    digested with SHA3-512.  The encoding is not injective across
    component boundaries; see the README caveats.
    """
    if not components:
        raise ValueError("component list must be non-empty")
    comps = tuple(int(c) for c in components)
    if any(c < 0 for c in comps):
        raise ValueError("components must be nonnegative")
    concat = "".join(str(c) for c in comps).encode("ascii")
    return SessionKey(comps, concat, hashlib.sha3_512(concat).digest())


def derive_session_key(secret: PartySecret, other_share: PublicShare) -> SessionKey:
    """Convenience composition: finalize_key(derive_components(...))."""
    return finalize_key(derive_components(secret, other_share))


def random_param_set(p: int, t: int, rng, rowmax: int = 100) -> ParamSet:
    """Sample dimensions uniformly within the recommended ranges.

    rows_a is drawn from [5, rowmax] and cols_a from [4, rows_a - 1].
    Both parties must still agree on the result out of band.
    """
    if rowmax < 5:
        raise ValueError(f"rowmax must be at least 5, got {rowmax}")
    rows_a = rng.randrange(5, rowmax + 1)
    cols_a = rng.randrange(4, rows_a)
    return ParamSet(p=p, rows_a=rows_a, cols_a=cols_a, t=t)
