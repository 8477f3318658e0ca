"""``homvote`` command line.

Exit codes: 0 success, 1 domain rejection (refused lifecycle step, failed
audit, bad shards, invalid spec), 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import admin
from .bench import MODES, run_bench
from .config import SpecError
from .election import VotingError
from .shamir import DuplicateAbscissa, InconsistentShards, InsufficientShards, InvalidThreshold
from .simulation import run_simulation
from .workspace import ElectionDir, LifecycleError

DOMAIN_ERRORS = (
    LifecycleError,
    SpecError,
    InvalidThreshold,
    InsufficientShards,
    DuplicateAbscissa,
    InconsistentShards,
    admin.ElectionMismatch,
    admin.KeyReconstructionFailed,
    VotingError,
)


class UsageError(Exception):
    pass


def _contest_range(text: str) -> list[int]:
    try:
        if ".." in text:
            lo, hi = text.split("..")
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N, N..M or a comma list, got {text!r}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("contest counts must be >= 1")
    return values


def _edir(args) -> ElectionDir:
    root = args.dir or os.environ.get("ELECTION_DIR")
    if not root:
        raise UsageError("no election directory: pass --dir or set ELECTION_DIR")
    return ElectionDir(root)


def cmd_init(args) -> int:
    spec_text = Path(args.spec).read_text()
    edir = ElectionDir.init(_edir(args).root, spec_text, force=args.force)
    if args.registry:
        added = edir.registry().import_csv(args.registry)
        print(f"imported {added} voters")
    spec = edir.spec()
    print(f"initialized {edir.root} for {spec.election_id}: {len(spec.contests)} contest(s), "
          f"{len(spec.states)} state(s)")
    return 0


def cmd_ceremony(args) -> int:
    edir = _edir(args)
    keys = admin.key_ceremony(edir, bits=args.bits, M=args.shards, t=args.threshold)
    print(f"paillier modulus: {keys.paillier_public.bits} bits; "
          f"{args.threshold}-of-{args.shards} shards:")
    for path in keys.shard_files:
        print(f"  {path}")
    return 0


def cmd_simulate(args) -> int:
    edir = _edir(args)
    edir.require("keys_ready", action="simulate voting")
    result = run_simulation(
        edir.server(),
        args.voters,
        workers=args.workers,
        duplicates=args.duplicates,
        tamper=args.tamper,
        seed=args.seed,
        rate=args.rate,
    )
    print(f"accepted: {result.accepted}")
    for name, count in sorted(result.rejected.items()):
        print(f"rejected {name}: {count}")
    print(f"elapsed: {result.elapsed:.2f}s")
    return 0


def cmd_close(args) -> int:
    edir = _edir(args)
    applied = admin.close_election(edir)
    print(f"closed; {applied} queued contest messages applied")
    return 0


def cmd_reconstruct(args) -> int:
    edir = _edir(args)
    admin.reconstruct_for(edir, args.shards)
    print(f"decryption key reassembled from {len(args.shards)} shards")
    return 0


def cmd_decrypt(args) -> int:
    edir = _edir(args)
    totals, rows, check = admin.decrypt_election(edir, args.partitions)
    errors = [r for r in totals.values() if r.error] + [r for r in rows if r.error]
    print(f"decrypted {len(totals)} tallies and {len(rows)} ballot contests; {len(errors)} errors")
    print(f"cross-check: {'all equal' if check.all_equal else 'DIVERGENT'}")
    return 0


def cmd_report(args) -> int:
    edir = _edir(args)
    edir.require("decrypted", "reported", action="generate reports")
    spec = edir.spec()
    totals = admin.load_decrypted_totals(edir)
    rows = admin.read_decrypted(edir.decrypted_dir / "ballots.jsonl")
    check = admin.cross_check(spec, totals, rows, edir.ledger().anon_ids(), edir.registry())
    results = admin.build_results(spec, totals, rows, check)
    formats = ("json", "csv") if args.format == "both" else (args.format,)
    for path in admin.generate_report(results, edir.reports_dir, formats):
        print(path)
    edir.set_phase("reported")
    return 0


def cmd_audit(args) -> int:
    edir = _edir(args)
    edir.require("decrypted", "reported", action="audit")
    report = admin.audit(edir)
    check = report.cross_check
    print(f"ledger: {'ok' if report.ledger_bad_index is None else f'broken at block {report.ledger_bad_index}'}")
    print(f"stored ballots verified: {check.stored_ballots - len(report.bad_receipts)}/{check.stored_ballots}")
    print(f"quarantined tally messages: {report.quarantined}")
    print(f"ledger={check.ledger_entries} voted={check.voted_total} stored={check.stored_ballots}")
    print(f"cross-check: {'all equal' if check.all_equal else 'DIVERGENT'}")
    for finding in report.findings():
        print(f"  {finding}")
    return 0 if report.ok else 1


def cmd_bench(args) -> int:
    modes = MODES if args.mode == "both" else (args.mode,)
    result = run_bench(
        args.contests, modes, ballots=args.ballots, bits=args.bits, warmup=args.warmup,
        workers=args.workers,
    )
    print(result.table())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homvote", description=__doc__.splitlines()[0])
    parser.add_argument("--dir", help="election directory (default: $ELECTION_DIR)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create an election directory from a spec")
    p.add_argument("spec")
    p.add_argument("--force", action="store_true", help="overwrite an existing directory")
    p.add_argument("--registry", help="voter CSV (voter_id,state,modality) to import")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("ceremony", help="generate keys and write decryption-key shards")
    p.add_argument("--bits", type=int, help="Paillier modulus size (default: spec key_bits)")
    p.add_argument("--shards", type=int, default=5)
    p.add_argument("--threshold", type=int, default=3)
    p.set_defaults(func=cmd_ceremony)

    p = sub.add_parser("simulate", help="drive synthetic voters through the voting flow")
    p.add_argument("--voters", type=int, required=True)
    p.add_argument("--rate", type=float, help="arrivals per second (default: as fast as possible)")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--duplicates", type=int, default=0)
    p.add_argument("--tamper", type=int, default=0)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("close", help="stop voting and drain the tally queues")
    p.set_defaults(func=cmd_close)

    p = sub.add_parser("reconstruct", help="reassemble the decryption key from shard files")
    p.add_argument("--shards", nargs="+", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("decrypt", help="decrypt totals and individual ballots")
    p.add_argument("--partitions", type=int, help="worker processes (default: cpu count)")
    p.set_defaults(func=cmd_decrypt)

    p = sub.add_parser("report", help="write results reports")
    p.add_argument("--format", choices=("json", "csv", "both"), default="both")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("audit", help="re-verify ledger, stored ballots and cross-checks")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("bench", help="time the submission pipeline")
    p.add_argument("--contests", type=_contest_range, default=[1, 2, 3, 4, 5])
    p.add_argument("--mode", choices=MODES + ("both",), default="both")
    p.add_argument("--ballots", type=int, default=100)
    p.add_argument("--bits", type=int, default=1024)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"homvote: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"homvote: error: {exc}", file=sys.stderr)
        return 2
    except DOMAIN_ERRORS as exc:
        print(f"homvote: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
