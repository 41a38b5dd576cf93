"""rkex — rectangular-matrix key agreement over prime fields.

Two parties each sample t pairs of rectangular secret matrices over
Z_p, publish only the per-cycle products, and independently derive the
same 512-bit session key from determinants of cross products.  The
package adds a one-shot hash-keystream cipher keyed by that session,
authenticated message envelopes (NH universal hashing finished with
HMAC-SHA3-512), a framed TCP peer protocol, and an analysis toolkit
(complexity estimation, toy-scale exhaustive attack, singularity
audits, benchmarking).

Hot kernels run on a numba JIT backend with a pure-numpy fallback;
select with the ``RKEX_BACKEND`` environment variable.
"""

from rkex._backends import active_backend, available_backends, set_backend, use_backend
from rkex.analysis import (
    bench_kep,
    brute_force_factor,
    complexity_estimate,
    singularity_audit,
)
from rkex.envelope import Envelope, MacKey, seal_envelope, verify_envelope
from rkex.hashcipher import CipherText, decrypt, encrypt, pad_message
from rkex.kep import (
    ParamSet,
    PartySecret,
    PublicShare,
    SessionKey,
    derive_components,
    derive_session_key,
    finalize_key,
    new_session,
)
from rkex.zpmath import ZpMatrix, det_mod, mat_mul_mod, rank_mod, sample_matrix, transpose

__version__ = "0.1.0"

__all__ = [
    "CipherText",
    "Envelope",
    "MacKey",
    "ParamSet",
    "PartySecret",
    "PublicShare",
    "SessionKey",
    "ZpMatrix",
    "__version__",
    "active_backend",
    "available_backends",
    "bench_kep",
    "brute_force_factor",
    "complexity_estimate",
    "decrypt",
    "derive_components",
    "derive_session_key",
    "det_mod",
    "encrypt",
    "finalize_key",
    "mat_mul_mod",
    "new_session",
    "pad_message",
    "rank_mod",
    "sample_matrix",
    "seal_envelope",
    "set_backend",
    "singularity_audit",
    "transpose",
    "use_backend",
    "verify_envelope",
]
