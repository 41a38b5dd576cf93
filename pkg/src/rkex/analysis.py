"""Security and performance instrumentation.

Four tools around the exchange: a closed-form brute-force complexity
estimator, an exhaustive toy-scale factorization attack on a public
share matrix, a singularity audit confirming the structural rank bound
on shares, and a wall-clock benchmark harness with text/CSV reporting.

The estimator reports (ndim * q)^2 * t with q = (p-1)/2 and
ndim = rows_a * cols_a.  The attack oracle instead enumerates the true
candidate space — every entry drawn from [(p-1)/2, p-1], i.e.
((p+1)/2)^(2*ndim) pairs — which grows much faster; the two scales are
intentionally different (see README).
"""

from __future__ import annotations

import csv as _csv
import io
import math
import secrets
import statistics
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from rkex import _backends, kep, zpmath
from rkex.kep import ParamSet, PublicShare
from rkex.zpmath import ZpMatrix

__all__ = [
    "AttackResult",
    "AuditReport",
    "BenchResult",
    "BudgetExceeded",
    "ComplexityReport",
    "MatrixAudit",
    "bench_kep",
    "brute_force_factor",
    "complexity_estimate",
    "format_audit",
    "format_bench_rows",
    "singularity_audit",
]

DEFAULT_BUDGET = 10**8

BENCH_CSV_COLUMNS = ("rowsA", "columnsA", "cycles", "complexity_bits", "mean_ms", "stddev_ms")


@dataclass(frozen=True)
class ComplexityReport:
    """Closed-form brute-force cost of one exchange configuration."""

    params: ParamSet
    q: int
    ndim: int
    raw: int
    bits: float

    def __str__(self) -> str:
        return (
            f"p={self.params.p} {self.params.rows_a}x{self.params.cols_a} "
            f"t={self.params.t}: 2^{self.bits:.2f} (~2^{round(self.bits)})"
        )


def complexity_estimate(params: ParamSet) -> ComplexityReport:
    """Brute-force work factor (ndim * q)^2 * t for the given parameters."""
    q = (params.p - 1) // 2
    ndim = params.rows_a * params.cols_a
    raw = (ndim * q) ** 2 * params.t
    return ComplexityReport(params=params, q=q, ndim=ndim, raw=raw, bits=math.log2(raw))


class BudgetExceeded(Exception):
    """The candidate space is larger than the configured budget."""

    def __init__(self, required: int, budget: int):
        super().__init__(
            f"attack requires {required} candidates, exceeding the budget of {budget}"
        )
        self.required = required
        self.budget = budget


@dataclass(frozen=True)
class AttackResult:
    """Outcome of an exhaustive factorization of one share matrix.

    ``matches`` holds every (A, B) with A.B = U mod p and all entries in
    the sampling range, in deterministic lexicographic candidate order.
    When a counterpart share matrix was supplied, ``recovered`` holds the
    key component det(A^T.V.B^T) each match implies, aligned with
    ``matches``.
    """

    tried: int
    matches: Tuple[Tuple[ZpMatrix, ZpMatrix], ...]
    recovered: Optional[Tuple[int, ...]] = None


def _candidate_entries(span_values: np.ndarray, n_entries: int) -> np.ndarray:
    """All entry vectors of length n_entries over span_values, lexicographic."""
    grids = np.meshgrid(*([span_values] * n_entries), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def brute_force_factor(
    u: ZpMatrix,
    params: ParamSet,
    *,
    counterpart: Optional[ZpMatrix] = None,
    budget: int = DEFAULT_BUDGET,
) -> AttackResult:
    """Enumerate every admissible factorization A.B = u mod p.

    Candidates draw each of the 2*ndim entries from [(p-1)/2, p-1]; the
    total pair count ((p+1)/2)^(2*ndim) must not exceed ``budget`` or
    :class:`BudgetExceeded` is raised before any work happens.  With a
    ``counterpart`` share matrix V, each match also yields the session
    component det(A^T.V.B^T) an attacker would recover.
    """
    p = params.p
    if u.p != p:
        raise ValueError(f"share modulus {u.p} does not match params modulus {p}")
    if (u.rows, u.cols) != (params.rows_a, params.rows_a):
        raise ValueError(
            f"share matrix is {u.rows}x{u.cols}, expected {params.rows_a}x{params.rows_a}"
        )
    if counterpart is not None:
        if counterpart.p != p or (counterpart.rows, counterpart.cols) != (u.rows, u.cols):
            raise ValueError("counterpart share must match the attacked share's shape")
    lo = (p - 1) // 2
    span = p - lo
    ndim = params.rows_a * params.cols_a
    n_each = span**ndim
    total = n_each * n_each
    if total > budget:
        raise BudgetExceeded(total, budget)

    values = np.arange(lo, p, dtype=np.uint64)
    entries = _candidate_entries(values, ndim)
    a_all = entries.reshape(n_each, params.rows_a, params.cols_a)
    b_all = entries.reshape(n_each, params.cols_a, params.rows_a)
    # Summed per-term products must fit in uint64 for the vectorized path.
    fast = params.cols_a * (p - 1) ** 2 < 1 << 64
    matches: List[Tuple[ZpMatrix, ZpMatrix]] = []
    if fast:
        p64 = np.uint64(p)
        u_arr = u.data
        for ai in range(n_each):
            prods = np.matmul(a_all[ai][None, :, :], b_all) % p64
            hits = np.nonzero((prods == u_arr[None, :, :]).all(axis=(1, 2)))[0]
            for bi in hits:
                matches.append(
                    (ZpMatrix(a_all[ai], p), ZpMatrix(b_all[int(bi)], p))
                )
    else:
        for ai in range(n_each):
            a_mat = ZpMatrix(a_all[ai], p)
            for bi in range(n_each):
                b_mat = ZpMatrix(b_all[bi], p)
                if zpmath.mat_mul_mod(a_mat, b_mat) == u:
                    matches.append((a_mat, b_mat))

    recovered = None
    if counterpart is not None:
        recovered = tuple(
            zpmath.det_mod(
                zpmath.mat_mul_mod(
                    zpmath.mat_mul_mod(zpmath.transpose(a), counterpart),
                    zpmath.transpose(b),
                )
            )
            for a, b in matches
        )
    return AttackResult(tried=total, matches=tuple(matches), recovered=recovered)


@dataclass(frozen=True)
class MatrixAudit:
    """Singularity check of one share matrix."""

    index: int
    det: int
    rank: int
    rank_bound: int

    @property
    def ok(self) -> bool:
        return self.det == 0 and self.rank <= self.rank_bound


@dataclass(frozen=True)
class AuditReport:
    """Per-matrix singularity results for a public share."""

    params: ParamSet
    checks: Tuple[MatrixAudit, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> Tuple[MatrixAudit, ...]:
        return tuple(c for c in self.checks if not c.ok)


def singularity_audit(share: PublicShare) -> AuditReport:
    """Check det = 0 and rank <= cols_a for every matrix in the share.

    Both must hold for any share honestly built as a tall-times-wide
    product; a failure marks the share as structurally inconsistent.
    """
    checks = []
    for k, m in enumerate(share.mats):
        checks.append(
            MatrixAudit(
                index=k,
                det=zpmath.det_mod(m),
                rank=zpmath.rank_mod(m),
                rank_bound=share.params.cols_a,
            )
        )
    return AuditReport(params=share.params, checks=tuple(checks))


@dataclass(frozen=True)
class BenchResult:
    """Wall-clock measurement of one party's work for a full exchange."""

    params: ParamSet
    repetitions: int
    backend: str
    complexity_bits: float
    mean_ms: float
    stddev_ms: float
    keygen_mean_ms: float
    derive_mean_ms: float
    samples_ms: Tuple[float, ...] = field(repr=False, default=())


def bench_kep(params: ParamSet, repetitions: int = 10, rng=None) -> BenchResult:
    """Time share generation plus key derivation, averaged over repetitions.

    Each repetition prepares a counterpart session off the clock, then
    times one party end to end: sampling its secret, computing its
    share, deriving the components from the counterpart share, and
    hashing the session key.
    """
    if repetitions < 1:
        raise ValueError(f"repetitions must be positive, got {repetitions}")
    if rng is None:
        rng = secrets.SystemRandom()
    # One untimed iteration first, so backend JIT compilation and cache
    # effects stay off the clock.
    warm_secret, warm_share = kep.new_session(params, rng)
    kep.derive_session_key(warm_secret, warm_share)
    totals = []
    keygen = []
    derive = []
    for _ in range(repetitions):
        _, other_share = kep.new_session(params, rng)
        t0 = time.perf_counter()
        secret, _ = kep.new_session(params, rng)
        t1 = time.perf_counter()
        kep.derive_session_key(secret, other_share)
        t2 = time.perf_counter()
        keygen.append((t1 - t0) * 1e3)
        derive.append((t2 - t1) * 1e3)
        totals.append((t2 - t0) * 1e3)
    return BenchResult(
        params=params,
        repetitions=repetitions,
        backend=_backends.get_backend().NAME,
        complexity_bits=complexity_estimate(params).bits,
        mean_ms=statistics.mean(totals),
        stddev_ms=statistics.stdev(totals) if repetitions > 1 else 0.0,
        keygen_mean_ms=statistics.mean(keygen),
        derive_mean_ms=statistics.mean(derive),
        samples_ms=tuple(totals),
    )


def format_bench_rows(
    results: Sequence[BenchResult], *, csv: bool = False, include_backend: bool = False
) -> str:
    """Render benchmark rows as aligned text or CSV.

    CSV columns are rowsA, columnsA, cycles, complexity_bits, mean_ms,
    stddev_ms, plus a trailing backend column when requested.
    """
    header = list(BENCH_CSV_COLUMNS)
    if include_backend:
        header.append("backend")
    rows = []
    for r in results:
        row = [
            str(r.params.rows_a),
            str(r.params.cols_a),
            str(r.params.t),
            f"{r.complexity_bits:.2f}",
            f"{r.mean_ms:.3f}",
            f"{r.stddev_ms:.3f}",
        ]
        if include_backend:
            row.append(r.backend)
        rows.append(row)
    if csv:
        buf = io.StringIO()
        writer = _csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    return _align_table(header, rows)


def format_audit(report: AuditReport, *, csv: bool = False) -> str:
    """Render an audit report as aligned text or CSV."""
    header = ["index", "det", "rank", "rank_bound", "ok"]
    rows = [
        [str(c.index), str(c.det), str(c.rank), str(c.rank_bound), str(c.ok).lower()]
        for c in report.checks
    ]
    if csv:
        buf = io.StringIO()
        writer = _csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buf.getvalue()
    return _align_table(header, rows)


def _align_table(header: List[str], rows: List[List[str]]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
