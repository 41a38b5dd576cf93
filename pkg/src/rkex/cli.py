"""Command-line interface.

Subcommands: exchange (offline two-party simulation), serve/connect
(networked exchange over TCP), encrypt/decrypt (64-byte messages under
stored session state), seal/verify (authenticated envelopes on files),
estimate (brute-force complexity), attack (toy exhaustive
factorization), audit (share singularity checks), and bench (timing
harness with backend comparison).

Exit codes: 0 success, 1 cryptographic or protocol failure, 2 usage
error.  ``--seed`` gives a reproducible but non-secure generator and is
refused without the explicit ``--insecure-test-rng`` acknowledgement.
"""

from __future__ import annotations

import argparse
import logging
import os
import random
import secrets
import sys
from typing import List, Optional, Sequence, Tuple

from rkex import _backends, analysis, envelope, hashcipher, kep, peer

logger = logging.getLogger(__name__)

DEFAULT_BIND = "127.0.0.1:0"
BIND_ENV_VAR = "RKEX_BIND"

# Benchmark preset configurations: (rows_a, cols_a, t) per prime.
_PRIME_31 = 2**31 - 1
_PRIME_64 = 18446744073709551113
BENCH_PRESETS = {
    "table1": (
        _PRIME_31,
        (
            (5, 4, 10), (5, 4, 20), (5, 4, 100),
            (6, 5, 10), (6, 5, 20), (6, 5, 100),
            (20, 19, 10), (20, 19, 20), (20, 19, 100),
            (100, 99, 10), (100, 99, 20), (100, 99, 100),
        ),
    ),
    "table2": (
        _PRIME_64,
        ((5, 4, 10), (6, 5, 10), (20, 19, 10), (100, 99, 10)),
    ),
    "toy": (5303, ((3, 2, 2),)),
}


def _parse_params(text: str, parser: argparse.ArgumentParser) -> kep.ParamSet:
    parts = text.split(",")
    if len(parts) != 4:
        parser.error(f"--params must be p,rowsA,columnsA,t (got {text!r})")
    try:
        p, rows_a, cols_a, t = (int(part.strip()) for part in parts)
    except ValueError:
        parser.error(f"--params fields must be integers (got {text!r})")
    try:
        return kep.ParamSet(p=p, rows_a=rows_a, cols_a=cols_a, t=t)
    except ValueError as exc:
        parser.error(f"invalid parameters: {exc}")
    raise AssertionError("unreachable")


def _make_rng(args: argparse.Namespace, parser: argparse.ArgumentParser):
    if args.seed is not None:
        if not args.insecure_test_rng:
            parser.error("--seed produces a non-secure generator; pass --insecure-test-rng to confirm")
        return random.Random(args.seed)
    return secrets.SystemRandom()


def _parse_bind(text: str, parser: argparse.ArgumentParser) -> Tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        parser.error(f"address must be HOST:PORT (got {text!r})")
    try:
        return host, int(port)
    except ValueError:
        parser.error(f"port must be an integer (got {port!r})")
    raise AssertionError("unreachable")


def _add_params_arg(sub: argparse.ArgumentParser, required: bool = True) -> None:
    sub.add_argument(
        "--params",
        metavar="p,rowsA,columnsA,t",
        required=required,
        help="shared configuration: prime, A dimensions, cycle count",
    )


def _add_rng_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, help="deterministic generator seed (tests only)")
    sub.add_argument(
        "--insecure-test-rng",
        action="store_true",
        help="acknowledge that --seed is not cryptographically secure",
    )


def _read_file(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write_file(path: str, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)


def _mac_key_from_args(args: argparse.Namespace) -> envelope.MacKey:
    if args.session:
        _, digest, _ = peer.load_session(args.session)
        return envelope.MacKey(digest)
    key = bytes.fromhex(args.key_hex)
    return envelope.MacKey(key)


# ---------------------------------------------------------------------------
# subcommands

def _cmd_exchange(args, parser) -> int:
    params = _parse_params(args.params, parser)
    rng = _make_rng(args, parser)
    alice_secret, alice_share = kep.new_session(params, rng)
    bob_secret, bob_share = kep.new_session(params, rng)
    alice_key = kep.derive_session_key(alice_secret, bob_share)
    bob_key = kep.derive_session_key(bob_secret, alice_share)
    print(f"alice {alice_key.digest.hex()}")
    print(f"bob {bob_key.digest.hex()}")
    if alice_key.digest != bob_key.digest:
        print("error: derived keys differ", file=sys.stderr)
        return 1
    if args.save_a:
        peer.save_session(args.save_a, params, alice_key.digest, alice_secret)
    if args.save_b:
        peer.save_session(args.save_b, params, bob_key.digest, bob_secret)
    return 0


def _cmd_serve(args, parser) -> int:
    params = _parse_params(args.params, parser)
    rng = _make_rng(args, parser)
    host, port = _parse_bind(args.bind, parser)
    server = peer.PeerServer(
        params, host, port, rng=rng, once=args.once, timeout=args.timeout
    )
    host, port = server.start()
    print(f"listening on {host}:{port}", flush=True)
    status = 0
    try:
        while True:
            outcome = server.next_outcome(timeout=None)
            if outcome.error is not None:
                print(f"error: {outcome.error}", file=sys.stderr)
                status = 1
            else:
                print(f"session key {outcome.digest.hex()}", flush=True)
                for msg in outcome.messages:
                    print(f"message: {msg.decode('utf-8', errors='backslashreplace')}")
            if args.once:
                break
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return status


def _cmd_connect(args, parser) -> int:
    params = _parse_params(args.params, parser)
    rng = _make_rng(args, parser)
    host, port = _parse_bind(args.target, parser)
    message = args.message.encode("utf-8") if args.message is not None else None
    env_msg = args.envelope.encode("utf-8") if args.envelope is not None else None
    outcome = peer.run_initiator(
        host,
        port,
        params,
        message=message,
        envelope_message=env_msg,
        rng=rng,
        timeout=args.timeout,
        session_path=args.save_session,
    )
    print(f"session key {outcome.digest.hex()}")
    for msg in outcome.messages:
        print(f"echo verified: {msg.decode('utf-8', errors='backslashreplace')}")
    return 0


def _cmd_encrypt(args, parser) -> int:
    _params, digest, secret = peer.load_session(args.session)
    plaintext = _read_file(args.infile)
    padded = hashcipher.pad_message(plaintext)
    own_share = kep.share_from_secret(secret)
    ct = hashcipher.encrypt_with_digest(digest, own_share, padded)
    _write_file(args.outfile, peer.encode_ciphertext(ct))
    return 0


def _cmd_decrypt(args, parser) -> int:
    params, _digest, secret = peer.load_session(args.session)
    try:
        ct = peer.decode_ciphertext(_read_file(args.infile), params)
    except peer.ProtocolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    plaintext = hashcipher.decrypt(secret, ct)
    if args.outfile:
        _write_file(args.outfile, plaintext)
    else:
        sys.stdout.buffer.write(plaintext)
        sys.stdout.buffer.write(b"\n")
    return 0


def _cmd_seal(args, parser) -> int:
    key = _mac_key_from_args(args)
    payload = _read_file(args.infile)
    env = envelope.seal_envelope(key, payload)
    _write_file(args.outfile, envelope.encode_envelope(env))
    return 0


def _cmd_verify(args, parser) -> int:
    key = _mac_key_from_args(args)
    try:
        env = envelope.decode_envelope(_read_file(args.infile))
        envelope.verify_envelope(key, env)
    except envelope.TagMismatch:
        print("REJECT (tag mismatch)")
        return 1
    except envelope.MalformedEnvelope as exc:
        print(f"REJECT (malformed: {exc})")
        return 1
    print("ACCEPT")
    if args.print_payload:
        sys.stdout.buffer.write(env.payload)
        sys.stdout.buffer.write(b"\n")
    return 0


def _cmd_estimate(args, parser) -> int:
    if args.preset:
        prime, rows = BENCH_PRESETS[args.preset]
        configs = [kep.ParamSet(p=prime, rows_a=r, cols_a=c, t=t) for r, c, t in rows]
    else:
        if not args.params:
            parser.error("estimate requires --params or --preset")
        configs = [_parse_params(args.params, parser)]
    for params in configs:
        report = analysis.complexity_estimate(params)
        print(
            f"p={params.p} rowsA={params.rows_a} columnsA={params.cols_a} "
            f"t={params.t} complexity ≈2^{round(report.bits)} "
            f"(exact 2^{report.bits:.2f})"
        )
    return 0


def _cmd_attack(args, parser) -> int:
    params = _parse_params(args.params, parser)
    rng = _make_rng(args, parser)
    victim_secret, victim_share = kep.new_session(params, rng)
    other_secret, other_share = kep.new_session(params, rng)
    true_components = kep.derive_components(victim_secret, other_share)
    try:
        result = analysis.brute_force_factor(
            victim_share.mats[0],
            params,
            counterpart=other_share.mats[0],
            budget=args.budget,
        )
    except analysis.BudgetExceeded as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 1
    print(f"candidates tried: {result.tried}")
    print(f"matches: {len(result.matches)}")
    print(f"true component: {true_components[0]}")
    recovered = true_components[0] in (result.recovered or ())
    print(f"true component recovered: {'yes' if recovered else 'no'}")
    return 0 if recovered else 1


def _cmd_audit(args, parser) -> int:
    params = _parse_params(args.params, parser)
    rng = _make_rng(args, parser)
    failures = 0
    for i in range(args.sessions):
        _, share = kep.new_session(params, rng)
        report = analysis.singularity_audit(share)
        failures += len(report.failures)
        if i == 0 or not report.ok:
            sys.stdout.write(analysis.format_audit(report, csv=args.csv))
    print(f"audited {args.sessions} shares ({args.sessions * params.t} matrices), failures: {failures}")
    return 0 if failures == 0 else 1


def _bench_configs(args, parser) -> List[kep.ParamSet]:
    if args.preset:
        prime, rows = BENCH_PRESETS[args.preset]
        return [kep.ParamSet(p=prime, rows_a=r, cols_a=c, t=t) for r, c, t in rows]
    if not args.params:
        parser.error("bench requires --params or --preset")
    return [_parse_params(args.params, parser)]


def _cmd_bench(args, parser) -> int:
    configs = _bench_configs(args, parser)
    rng = _make_rng(args, parser)
    if args.backend == "both":
        backends = list(_backends.available_backends())
        if len(backends) < 2:
            print(
                f"note: only the {backends[0]} backend is available", file=sys.stderr
            )
    elif args.backend == "auto":
        backends = [None]
    else:
        if args.backend not in _backends.available_backends():
            parser.error(f"backend {args.backend!r} is not available")
        backends = [args.backend]
    results = []
    for name in backends:
        if name is None:
            results.extend(
                analysis.bench_kep(params, repetitions=args.reps, rng=rng)
                for params in configs
            )
        else:
            with _backends.use_backend(name):
                results.extend(
                    analysis.bench_kep(params, repetitions=args.reps, rng=rng)
                    for params in configs
                )
    include_backend = args.backend == "both"
    sys.stdout.write(
        analysis.format_bench_rows(results, csv=args.csv, include_backend=include_backend)
    )
    return 0


# ---------------------------------------------------------------------------
# parser assembly

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rkex",
        description="Rectangular-matrix key agreement: exchange, encrypt, authenticate, analyze.",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log protocol transcripts to stderr"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("exchange", help="simulate both parties in one process")
    _add_params_arg(sp)
    _add_rng_args(sp)
    sp.add_argument("--save-a", metavar="FILE", help="write the first party's session state")
    sp.add_argument("--save-b", metavar="FILE", help="write the second party's session state")
    sp.set_defaults(func=_cmd_exchange)

    sp = sub.add_parser("serve", help="act as the responder on a TCP address")
    _add_params_arg(sp)
    _add_rng_args(sp)
    sp.add_argument(
        "--bind",
        default=os.environ.get(BIND_ENV_VAR, DEFAULT_BIND),
        help=f"HOST:PORT to listen on (default from ${BIND_ENV_VAR} or {DEFAULT_BIND})",
    )
    sp.add_argument("--once", action="store_true", help="exit after the first session")
    sp.add_argument("--timeout", type=float, default=peer.DEFAULT_TIMEOUT)
    sp.set_defaults(func=_cmd_serve)

    sp = sub.add_parser("connect", help="act as the initiator against a responder")
    _add_params_arg(sp)
    _add_rng_args(sp)
    sp.add_argument("--target", required=True, help="HOST:PORT of the responder")
    sp.add_argument("--message", help="send this text encrypted (padded to 64 bytes)")
    sp.add_argument("--envelope", help="send this text as an authenticated envelope")
    sp.add_argument("--save-session", metavar="FILE", help="persist session state for encrypt/decrypt")
    sp.add_argument("--timeout", type=float, default=peer.DEFAULT_TIMEOUT)
    sp.set_defaults(func=_cmd_connect)

    sp = sub.add_parser("encrypt", help="encrypt a short file under stored session state")
    sp.add_argument("--session", required=True, metavar="FILE")
    sp.add_argument("--in", dest="infile", required=True, metavar="FILE")
    sp.add_argument("--out", dest="outfile", required=True, metavar="FILE")
    sp.set_defaults(func=_cmd_encrypt)

    sp = sub.add_parser("decrypt", help="decrypt a ciphertext with the counterpart's session state")
    sp.add_argument("--session", required=True, metavar="FILE")
    sp.add_argument("--in", dest="infile", required=True, metavar="FILE")
    sp.add_argument("--out", dest="outfile", metavar="FILE")
    sp.set_defaults(func=_cmd_decrypt)

    sp = sub.add_parser("seal", help="wrap a file in an authenticated envelope")
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--session", metavar="FILE", help="take the key from session state")
    group.add_argument("--key-hex", metavar="HEX", help="64-byte key as 128 hex digits")
    sp.add_argument("--in", dest="infile", required=True, metavar="FILE")
    sp.add_argument("--out", dest="outfile", required=True, metavar="FILE")
    sp.set_defaults(func=_cmd_seal)

    sp = sub.add_parser("verify", help="validate an envelope file")
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--session", metavar="FILE")
    group.add_argument("--key-hex", metavar="HEX")
    sp.add_argument("--in", dest="infile", required=True, metavar="FILE")
    sp.add_argument("--print-payload", action="store_true")
    sp.set_defaults(func=_cmd_verify)

    sp = sub.add_parser("estimate", help="brute-force complexity of a configuration")
    _add_params_arg(sp, required=False)
    sp.add_argument("--preset", choices=sorted(BENCH_PRESETS))
    sp.set_defaults(func=_cmd_estimate)

    sp = sub.add_parser("attack", help="exhaustive toy-scale factorization of a share")
    _add_params_arg(sp)
    _add_rng_args(sp)
    sp.add_argument("--budget", type=int, default=analysis.DEFAULT_BUDGET)
    sp.set_defaults(func=_cmd_attack)

    sp = sub.add_parser("audit", help="singularity audit of freshly generated shares")
    _add_params_arg(sp)
    _add_rng_args(sp)
    sp.add_argument("--sessions", type=int, default=1)
    sp.add_argument("--csv", action="store_true")
    sp.set_defaults(func=_cmd_audit)

    sp = sub.add_parser("bench", help="timing harness")
    _add_params_arg(sp, required=False)
    _add_rng_args(sp)
    sp.add_argument("--preset", choices=sorted(BENCH_PRESETS))
    sp.add_argument("--reps", type=int, default=10, help="repetitions per configuration")
    sp.add_argument("--csv", action="store_true")
    sp.add_argument(
        "--backend",
        choices=["auto", "numpy", "numba", "both"],
        default="auto",
        help="kernel backend to time ('both' appends a backend column)",
    )
    sp.set_defaults(func=_cmd_bench)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args, parser)
    except peer.ProtocolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except envelope.EnvelopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
