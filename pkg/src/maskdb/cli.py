"""Command-line frontend.

Masking happens client-side: commands derive the key from a password taken
from an environment variable (``--password-env``) or an interactive prompt,
never from argv. The 8-byte KDF salt travels as hex via ``--salt`` or the
``MASKDB_SALT`` environment variable; ``mask`` generates and echoes one if
not given.

Exit codes: 0 success, 2 usage, 3 integrity/unmask failure, 4 environment or
I/O failure, 5 protocol failure.
"""

from __future__ import annotations

import argparse
import getpass
import logging
import os
import signal
import sys
from pathlib import Path

from . import __version__
from .assoc import (
    MaskSpec,
    Triple,
    mask_array,
    read_triples,
    unmask_triples,
    write_triples,
)
from .assoc import AssociativeArray
from .errors import (
    ArgumentError,
    CapacityError,
    ConfigError,
    FormatError,
    IntegrityError,
    LoadError,
    MaskdbError,
    NotFound,
    ProtocolError,
    StoreError,
    UnmaskError,
)
from .kernels import correlate, threshold_masked
from .masking import KeyMaterial, MaskMode, derive_key, mask
from .ope import OpeServer, OpeServerState, OpeSession, SocketTransport, load_state
from .ope.server import key_check_token
from .store import TripleStore

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTEGRITY = 3
EXIT_ENVIRONMENT = 4
EXIT_PROTOCOL = 5

SALT_ENV = "MASKDB_SALT"


def pad_numeric(value: str, width: int) -> str:
    """Zero-pad a decimal string so byte order equals numeric order."""
    if not value.isdigit():
        return value
    if len(value) > width:
        raise ConfigError(f"numeric value {value!r} exceeds width {width}")
    return value.zfill(width)


def _read_salt(args) -> bytes:
    text = args.salt or os.environ.get(SALT_ENV)
    if not text:
        raise ConfigError(f"a salt is required: pass --salt or set {SALT_ENV} "
                          "(16 hex digits / 8 bytes)")
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        raise ConfigError(f"salt must be hex, got {text!r}") from None
    if len(raw) != 8:
        raise ConfigError(f"salt must be 8 bytes (16 hex digits), got {len(raw)}")
    return raw


def _read_password(args) -> str:
    if args.password_env:
        password = os.environ.get(args.password_env)
        if not password:
            raise ConfigError(f"environment variable {args.password_env} is empty or unset")
        return password
    if not sys.stdin.isatty():
        raise ConfigError("no --password-env given and stdin is not interactive")
    return getpass.getpass("password: ")


def _derive(args, salt: bytes) -> KeyMaterial:
    return derive_key(_read_password(args), salt, rounds=args.rounds,
                      cipher_mode=args.cipher_mode, det_hash=args.det_hash)


def _parse_spec(text: str) -> MaskSpec:
    try:
        return MaskSpec.parse(text)
    except ConfigError as e:
        raise _Usage(str(e)) from e


class _Usage(Exception):
    """Bad invocation; handled as exit code 2 with the message on stderr."""


def _ope_sessions(args, spec: MaskSpec, key: KeyMaterial, on_remap=None) -> dict:
    dims = spec.ope_dimensions()
    if not dims:
        return {}
    if not args.ope_endpoint:
        raise _Usage(f"spec has OPE on {', '.join(dims)} but no --ope-endpoint given")
    host, _, port_text = args.ope_endpoint.rpartition(":")
    if not host or not port_text.isdigit():
        raise _Usage(f"--ope-endpoint must be host:port, got {args.ope_endpoint!r}")
    # all OPE dimensions share the endpoint's single tree
    session = OpeSession(SocketTransport(host, int(port_text)), key, on_remap=on_remap)
    return {dim: session for dim in dims}


def _close_sessions(sessions: dict) -> None:
    for session in {id(s): s for s in sessions.values()}.values():
        session.close()


# -- commands ---------------------------------------------------------------

def cmd_mask(args) -> int:
    spec = _parse_spec(args.spec)
    triples = read_triples(args.input)
    if spec == MaskSpec():
        key = None
        sessions = {}
    else:
        if args.salt or os.environ.get(SALT_ENV):
            salt = _read_salt(args)
        else:
            salt = os.urandom(8)
            print(f"salt={salt.hex()}", file=sys.stderr)
        key = _derive(args, salt)
        sessions = _ope_sessions(args, spec, key)
    try:
        if args.numeric_width:
            triples = _pad_ope_dimensions(triples, spec, args.numeric_width)
        arr = AssociativeArray.from_triples(triples)
        masked = mask_array(arr, spec, key, sessions=sessions,
                            allow_rnd_keys=args.allow_rnd_keys)
    finally:
        _close_sessions(sessions)
    write_triples(args.out, masked.array.triples())
    print(f"masked {len(masked.array)} triples under {spec} -> {args.out}", file=sys.stderr)
    return EXIT_OK


def _pad_ope_dimensions(triples, spec: MaskSpec, width: int):
    out = []
    for t in triples:
        row = pad_numeric(t.row, width) if spec.row is MaskMode.OPE else t.row
        col = pad_numeric(t.col, width) if spec.col is MaskMode.OPE else t.col
        val = pad_numeric(t.val, width) if spec.val is MaskMode.OPE else t.val
        out.append(Triple(row, col, val))
    return out


def cmd_unmask(args) -> int:
    spec = _parse_spec(args.spec)
    triples = read_triples(args.input)
    if spec == MaskSpec():
        key = None
        sessions = {}
    else:
        key = _derive(args, _read_salt(args))
        sessions = _ope_sessions(args, spec, key)
    from .assoc import _TripleUnmasker
    worker = _TripleUnmasker(spec, key, sessions)
    good: list[Triple] = []
    bad: list[tuple[int, str]] = []
    try:
        for i, t in enumerate(triples, start=1):
            try:
                good.append(worker.unmask_triple(t))
            except (UnmaskError, FormatError) as e:
                bad.append((i, str(e)))
    finally:
        _close_sessions(sessions)
    write_triples(args.out, good)
    if bad:
        for line_no, message in bad:
            print(f"line {line_no}: {message}", file=sys.stderr)
        print(f"unmasked {len(good)} triples, {len(bad)} failed integrity/unmasking",
              file=sys.stderr)
        return EXIT_INTEGRITY
    print(f"unmasked {len(good)} triples -> {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_ope_token(args) -> int:
    key = _derive(args, _read_salt(args))
    print(key_check_token(key))
    return EXIT_OK


def cmd_ope_server(args) -> int:
    data = Path(args.data) if args.data else None
    if data and data.exists():
        state = load_state(data, key_token=args.key_check)
    else:
        state = OpeServerState(width=args.width)
    server = OpeServer(state, host=args.host, port=args.port,
                       persist_path=data, key_token=args.key_check)
    print(f"ope-server listening on {server.host}:{server.port} "
          f"(width {state.tree.width}, {len(state.tree)} entries)", file=sys.stderr)

    def _stop(signum, frame):
        raise SystemExit(0)

    signal.signal(signal.SIGTERM, _stop)
    try:
        server.serve_forever()
    except (KeyboardInterrupt, SystemExit):
        pass
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(data_dir=args.data)
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    except OSError as e:
        print(f"cannot bind {args.host}:{args.port}: {e}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    return EXIT_OK


def _open_backend(args):
    """Local store path or remote service: one read/write surface."""
    if getattr(args, "service", None):
        from .service import StoreClient
        return StoreClient(args.service, args.name)
    return None


def cmd_ingest(args) -> int:
    triples = read_triples(args.input)
    spec = _parse_spec(args.spec) if args.spec else MaskSpec()
    client = _open_backend(args)
    if client is not None:
        client.ensure(spec)
        inserted = client.ingest(triples)
        total = len(client)
        client.close()
    else:
        path = Path(args.store)
        if path.exists():
            store = TripleStore.load(path)
            if args.spec and store.spec != spec:
                raise ConfigError(f"store {path} holds spec {store.spec}, not {spec}")
        else:
            store = TripleStore(spec=spec, path=path)
        inserted = store.ingest(triples)
        store.persist()
        total = len(store)
    print(f"ingested {inserted} new/changed triples ({total} total)", file=sys.stderr)
    return EXIT_OK


def _print_triples(triples) -> None:
    out = sys.stdout
    for t in triples:
        out.write(f"{t.row}\t{t.col}\t{t.val}\n")


def cmd_query(args) -> int:
    client = _open_backend(args)
    if client is not None:
        spec = client.spec()
        if args.row:
            triples = client.scan(row=args.row)
        elif args.col:
            triples = client.scan(col=args.col)
        elif args.range:
            triples = client.range_scan(*args.range)
        else:
            triples = client.scan()
        client.close()
    else:
        store = TripleStore.load(args.store)
        spec = store.spec
        if args.row:
            triples = store.scan_row(args.row)
        elif args.col:
            triples = store.scan_col(args.col)
        elif args.range:
            triples = store.range_scan(*args.range)
        else:
            triples = store.scan()
    if args.unmask:
        key = _derive(args, _read_salt(args))
        sessions = _ope_sessions(args, spec, key)
        try:
            triples = unmask_triples(triples, spec, key, sessions=sessions)
        finally:
            _close_sessions(sessions)
    _print_triples(triples)
    return EXIT_OK


def cmd_correlate(args) -> int:
    spec = _parse_spec(args.spec)
    key = None if spec.col is MaskMode.CLR and spec.row is MaskMode.CLR \
        else _derive(args, _read_salt(args))
    sessions = _ope_sessions(args, spec, key) if key else {}
    try:
        # mask the selector client-side under the column mode
        if spec.col is MaskMode.OPE:
            try:
                selector = sessions["col"].lookup(args.selector)
            except NotFound:
                return EXIT_OK  # absent selector: empty result
        elif spec.col is MaskMode.CLR:
            selector = args.selector
        else:
            selector = mask(args.selector, spec.col, key).payload

        client = _open_backend(args)
        if client is not None:
            if client.spec() != spec:
                raise ConfigError(f"store {args.name!r} holds spec {client.spec()}, not {spec}")
            triples = client.correlate([selector], threshold=args.threshold)
            client.close()
        else:
            store = TripleStore.load(args.store)
            if store.spec != spec:
                raise ConfigError(f"store spec is {store.spec}, not {spec}")
            result = correlate(store.to_array(), [selector])
            if args.threshold is not None:
                result = threshold_masked(result, args.threshold)
            triples = list(result.array.triples())

        # result keys are masked column keys on both dimensions
        out_spec = MaskSpec(spec.col, spec.col, MaskMode.CLR)
        out_sessions = {"row": sessions.get("col"), "col": sessions.get("col")} \
            if spec.col is MaskMode.OPE else {}
        clear = unmask_triples(triples, out_spec, key, sessions=out_sessions)
    finally:
        _close_sessions(sessions)
    clear.sort(key=lambda t: (t.row, -int(t.val), t.col))
    _print_triples(clear)
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_bench
    sizes = tuple(int(s) for s in args.sizes.split(","))
    modes = tuple(m.strip().upper() for m in args.modes.split(","))
    report = run_bench(sizes=sizes, modes=modes, seed=args.seed, reps=args.reps,
                       service_url=args.service, local=args.local)
    tsv = report.to_tsv()
    if args.out:
        Path(args.out).write_text(tsv, encoding="utf-8")
        print(f"report written to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(tsv)
    print(report.summary(), file=sys.stderr)
    return EXIT_OK


# -- argument parsing ---------------------------------------------------------

def _add_key_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--password-env", metavar="VAR",
                   help="environment variable holding the password (otherwise prompt)")
    p.add_argument("--salt", metavar="HEX", help=f"8-byte KDF salt as hex (or ${SALT_ENV})")
    p.add_argument("--rounds", type=int, default=1000, help="KDF iteration count")
    p.add_argument("--cipher-mode", choices=["GCM", "CBC"], default="GCM",
                   help="RND cipher construction")
    p.add_argument("--det-hash", choices=["sha1", "sha256"], default="sha1",
                   help="hash deriving the DET IV")


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--store", metavar="PATH", help="local store journal path")
    g.add_argument("--service", metavar="URL", help="store service base URL")
    p.add_argument("--name", default="default", help="store name on the service")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskdb",
        description="Mask, store, query and correlate sparse triple data "
                    "without revealing plaintext to the store.")
    parser.add_argument("--version", action="version", version=f"maskdb {__version__}")
    parser.add_argument("--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="mask a triple TSV file")
    p.add_argument("input", help="plaintext triple TSV")
    p.add_argument("--spec", required=True, metavar="R,C,V", help="e.g. DET,DET,RND")
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--ope-endpoint", metavar="HOST:PORT")
    p.add_argument("--width", type=int, default=16, help="ordertext width")
    p.add_argument("--allow-rnd-keys", action="store_true",
                   help="permit RND row/col keys (array becomes decrypt-only)")
    p.add_argument("--numeric-width", type=int, metavar="N",
                   help="zero-pad decimal fields of OPE dimensions to N digits")
    _add_key_flags(p)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("unmask", help="unmask a masked triple TSV file")
    p.add_argument("input", help="masked triple TSV")
    p.add_argument("--spec", required=True, metavar="R,C,V")
    p.add_argument("--out", required=True, metavar="PATH")
    p.add_argument("--ope-endpoint", metavar="HOST:PORT")
    _add_key_flags(p)
    p.set_defaults(func=cmd_unmask)

    p = sub.add_parser("ope-server", help="run the order-preserving encoding tree server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--width", type=int, default=16, help="ordertext width")
    p.add_argument("--data", metavar="PATH", help="state file (loaded if present, saved on exit)")
    p.add_argument("--key-check", metavar="TOKEN",
                   help="opaque key fingerprint; refuses state built under another key")
    p.set_defaults(func=cmd_ope_server)

    p = sub.add_parser("ope-token", help="print the key-check token for this key")
    _add_key_flags(p)
    p.set_defaults(func=cmd_ope_token)

    p = sub.add_parser("serve", help="run the HTTP store service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8470)
    p.add_argument("--data", metavar="DIR", required=True, help="store journal directory")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("ingest", help="load a (masked) triple TSV into a store")
    p.add_argument("input")
    p.add_argument("--spec", metavar="R,C,V", help="spec for a newly created store")
    _add_backend_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", help="scan a store (optionally unmasking results)")
    _add_backend_flags(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--row", help="equality scan on a row key (masked form)")
    g.add_argument("--col", help="equality scan on a column key (masked form)")
    g.add_argument("--range", nargs=3, metavar=("DIM", "LO", "HI"),
                   help="range scan on 'row' or 'col'")
    p.add_argument("--unmask", action="store_true", help="unmask results client-side")
    p.add_argument("--ope-endpoint", metavar="HOST:PORT")
    _add_key_flags(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("correlate", help="masked correlation against a selector column")
    p.add_argument("selector", help="plaintext selector column key, e.g. 'word|happy'")
    p.add_argument("--spec", required=True, metavar="R,C,V", help="spec the store was masked with")
    p.add_argument("--threshold", type=int, metavar="T", help="keep counts strictly above T")
    p.add_argument("--ope-endpoint", metavar="HOST:PORT")
    _add_backend_flags(p)
    _add_key_flags(p)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("bench", help="measure masked-vs-clear overhead")
    p.add_argument("--sizes", default="10000,100000", metavar="A,B,C")
    p.add_argument("--modes", default="CLR,DET,OPE,AUT", metavar="M1,M2")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--reps", type=int, default=5, help="repetitions per cell (median)")
    p.add_argument("--out", metavar="PATH", help="write the TSV report here")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--service", metavar="URL", help="benchmark against this running service")
    g.add_argument("--local", action="store_true", help="skip HTTP, run in-process")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _Usage as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ArgumentError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (IntegrityError, UnmaskError) as e:
        print(f"integrity error: {e}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (ProtocolError, CapacityError) as e:
        print(f"protocol error: {e}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (StoreError, LoadError, FormatError, NotFound, MaskdbError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ENVIRONMENT
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_ENVIRONMENT


if __name__ == "__main__":
    sys.exit(main())
