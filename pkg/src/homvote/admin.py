"""Administrative lifecycle: key ceremony, close, key reassembly, decryption of
totals and individual ballots, cross-checks and reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from . import shamir
from .blindsig import SignatureKeypair, sig_keygen
from .config import ElectionSpec, parse_spec
from .encoding import (
    CountMismatch,
    OverflowSuspected,
    TallyVector,
    decode_tally,
    int_to_writein,
)
from .election import Ledger, Registry, receipt_ok, verify_stored_ballot
from .paillier import (
    InvalidCiphertext,
    PaillierPrivateKey,
    PaillierPublicKey,
    decrypt,
    encrypt,
    keygen,
)
from .tally import TallyKey, TallyState
from .workspace import ElectionDir

log = logging.getLogger(__name__)

CEREMONY_CHECK_VALUE = 42


class ElectionMismatch(ValueError):
    pass


class KeyReconstructionFailed(ValueError):
    pass


@dataclass
class ElectionKeys:
    paillier_public: PaillierPublicKey
    signature_keypair: SignatureKeypair
    shard_files: list[Path]
    # only ever populated transiently inside key_ceremony
    paillier_private: PaillierPrivateKey | None = None


def key_ceremony(
    edir: ElectionDir,
    bits: int | None = None,
    M: int = 5,
    t: int = 3,
    sig_bits: int | None = None,
    e: int = 65537,
    paillier_keys: tuple[PaillierPublicKey, PaillierPrivateKey] | None = None,
) -> ElectionKeys:
    """Generate election keys, split (lam, mu) into M shard files and drop the
    private pair. ``paillier_keys`` injects a known key for hygiene tests."""
    edir.require("initialized", action="run the key ceremony")
    spec = edir.spec()
    bits = bits or spec.key_bits
    sig_bits = sig_bits or spec.signing_bits or bits
    params_check = shamir.ThresholdParams(M, t, 2)  # validates t, M before any keygen
    del params_check

    pk, sk = paillier_keys or keygen(bits)
    signer = sig_keygen(sig_bits, e)
    while signer.n == pk.n:
        signer = sig_keygen(sig_bits, e)

    params = shamir.ThresholdParams.for_modulus(pk.n, M, t)
    shards = shamir.split(shamir.SecretPair(sk.lam, sk.mu), params)
    check_ct = encrypt(pk, CEREMONY_CHECK_VALUE)

    edir.write_key("paillier_public.json", pk.to_dict())
    edir.write_key("verify_key.json", signer.verify_key.to_dict())
    edir.write_key("signing_key.json", signer.to_dict())
    edir.write_key(
        "ceremony_check.json",
        {"ciphertext": format(check_ct, "x"), "shards": M, "threshold": t},
    )
    edir.shards_dir.mkdir(exist_ok=True)
    paths = []
    for i, shard in enumerate(shards, 1):
        path = edir.shards_dir / f"shard_{i}.json"
        shamir.write_shard(path, shard, spec.election_id)
        paths.append(path)
    edir.set_phase("keys_ready", shards=M, threshold=t, key_bits=pk.bits)

    # the decryption key now exists only as shards
    del sk, shards
    return ElectionKeys(pk, signer, paths)


def reconstruct_key(
    shard_files: Sequence[Path | str],
    pk: PaillierPublicKey,
    election_id: str,
    check_ciphertext: int | None = None,
) -> PaillierPrivateKey:
    loaded = []
    for path in shard_files:
        shard, shard_election = shamir.read_shard(Path(path))
        if shard_election != election_id:
            raise ElectionMismatch(f"{path} belongs to election {shard_election!r}")
        if shard.params.prime <= pk.n:
            raise ElectionMismatch(f"{path}: field prime does not exceed this election's modulus")
        loaded.append(shard)
    pair = shamir.reconstruct(loaded)
    sk = PaillierPrivateKey(pk, pair.lam, pair.mu)
    if check_ciphertext is not None and decrypt(sk, check_ciphertext) != CEREMONY_CHECK_VALUE:
        raise KeyReconstructionFailed("reassembled key does not decrypt the ceremony check value")
    return sk


def reconstruct_for(edir: ElectionDir, shard_files: Sequence[Path | str]) -> PaillierPrivateKey:
    """Reassemble the key for a closed election and keep it for decryption."""
    edir.require("closed", "key_reconstructed", action="reassemble the decryption key")
    check = json.loads((edir.keys_dir / "ceremony_check.json").read_text())
    sk = reconstruct_key(
        shard_files, edir.public_key(), edir.spec().election_id, int(check["ciphertext"], 16)
    )
    edir.write_key("paillier_private.json", {"lam": format(sk.lam, "x"), "mu": format(sk.mu, "x")})
    edir.set_phase("key_reconstructed")
    return sk


def close_election(edir: ElectionDir) -> int:
    edir.require("keys_ready", action="close the election")
    applied = edir.tally().drain()
    edir.set_phase("closed")
    return applied


# --- totals -------------------------------------------------------------------


@dataclass
class TotalResult:
    key: TallyKey
    vector: TallyVector | None
    stored_count: int
    error: str | None = None

    @property
    def decoded_count(self) -> int | None:
        return self.vector.ballot_count if self.vector else None


def tally_keys(spec: ElectionSpec) -> list[TallyKey]:
    """Every (contest, state, modality) the election can produce, sorted."""
    return sorted(
        TallyKey(e.spec.contest_id, state, modality)
        for e in spec.contests
        for state in e.states
        for modality in spec.modalities
    )


def decrypt_totals(
    sk: PaillierPrivateKey, spec: ElectionSpec, states: dict[TallyKey, TallyState]
) -> dict[TallyKey, TotalResult]:
    results = {}
    for key in sorted(set(tally_keys(spec)) | set(states)):
        state = states.get(key, TallyState())
        layout = spec.layout(key.contest_id)
        if not state.encrypted_totals:
            zero = TallyVector((0,) * len(layout.components), 0)
            err = None if state.ballot_count == 0 else "CountMismatch: totals missing"
            results[key] = TotalResult(key, zero, state.ballot_count, err)
            continue
        try:
            sums = [decrypt(sk, c) for c in state.encrypted_totals]
            vector = decode_tally(layout, sums)
        except (CountMismatch, OverflowSuspected, InvalidCiphertext, ValueError) as exc:
            results[key] = TotalResult(key, None, state.ballot_count, f"{type(exc).__name__}: {exc}")
            continue
        err = None
        if vector.ballot_count != state.ballot_count:
            err = (
                f"CountMismatch: decrypted count {vector.ballot_count} "
                f"!= stored count {state.ballot_count}"
            )
        results[key] = TotalResult(key, vector, state.ballot_count, err)
    return results


# --- individual ballots --------------------------------------------------------


@dataclass(frozen=True)
class DecryptedContest:
    anon_id: str
    position: int
    contest_id: str
    state: str
    modality: str
    component: int | None
    label: str
    writein: str
    error: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)


_worker: dict = {}


def _init_worker(n: int, lam: int, mu: int, spec_json: str) -> None:
    pk = PaillierPublicKey(n)
    _worker["sk"] = PaillierPrivateKey(pk, lam, mu)
    _worker["spec"] = parse_spec(spec_json)


def _decrypt_record(sk: PaillierPrivateKey, spec: ElectionSpec, record: dict) -> list[DecryptedContest]:
    rows = []
    anon_id, state, modality = record["anon_id"], record["state"], record["modality"]
    for pos, contest in enumerate(record["contests"]):
        cid = contest.get("contest_id", "?")
        try:
            layout = spec.layout(cid)
            sums = [decrypt(sk, int(c, 16)) for c in contest["ciphertexts"]]
            vector = decode_tally(layout, sums)
            marked = [i for i, v in enumerate(vector.counts) if v]
            if vector.ballot_count != 1 or len(marked) != 1 or vector.counts[marked[0]] != 1:
                raise ValueError("not a single one-hot ballot")
            component = marked[0]
            writein = int_to_writein(decrypt(sk, int(contest["writein"], 16)))
            rows.append(
                DecryptedContest(
                    anon_id, pos, cid, state, modality, component,
                    layout.components[component].label, writein,
                )
            )
        except (ValueError, KeyError, UnicodeDecodeError, InvalidCiphertext) as exc:
            rows.append(
                DecryptedContest(anon_id, pos, cid, state, modality, None, "", "",
                                 f"{type(exc).__name__}: {exc}")
            )
    return rows


def _decrypt_partition(records: list[dict]) -> list[DecryptedContest]:
    sk, spec = _worker["sk"], _worker["spec"]
    out = []
    for record in records:
        out.extend(_decrypt_record(sk, spec, record))
    return out


def decrypt_ballots(
    sk: PaillierPrivateKey,
    spec: ElectionSpec,
    records: Iterable[dict],
    partitions: int | None = None,
) -> list[DecryptedContest]:
    """Decrypt every stored contest, split over ``partitions`` worker processes.

    The merged result is ordered by AnonID and contest position, so it does
    not depend on the partition count.
    """
    records = sorted(records, key=lambda r: r["anon_id"])
    partitions = partitions or os.cpu_count() or 1
    if partitions <= 1 or len(records) <= 1:
        rows = []
        for record in records:
            rows.extend(_decrypt_record(sk, spec, record))
    else:
        chunks = [records[i::partitions] for i in range(partitions)]
        chunks = [c for c in chunks if c]
        initargs = (sk.public.n, sk.lam, sk.mu, spec.to_json())
        with ProcessPoolExecutor(len(chunks), initializer=_init_worker, initargs=initargs) as pool:
            rows = [row for part in pool.map(_decrypt_partition, chunks) for row in part]
    rows.sort(key=lambda r: (r.anon_id, r.position))
    return rows


def write_decrypted(rows: Sequence[DecryptedContest], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(r.to_json() + "\n" for r in rows), encoding="utf-8")
    return path


def read_decrypted(path: Path) -> list[DecryptedContest]:
    rows = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(DecryptedContest(**json.loads(line)))
    return rows


def load_ballot_records(edir: ElectionDir) -> list[dict]:
    store = edir.ballot_store()
    return [store.get(a) for a in store.ids()]


# --- cross-check ------------------------------------------------------------------


@dataclass
class KeyCheck:
    key: TallyKey
    decoded_count: int | None
    stored_count: int
    ballot_records: int
    voted: int
    components_match: bool
    error: str | None = None

    @property
    def equal(self) -> bool:
        return (
            self.error is None
            and self.components_match
            and self.decoded_count == self.stored_count == self.ballot_records == self.voted
        )


@dataclass
class CrossCheckReport:
    keys: list[KeyCheck]
    ledger_entries: int
    voted_total: int
    stored_ballots: int
    divergences: list[str] = field(default_factory=list)

    @property
    def all_equal(self) -> bool:
        return not self.divergences

    def to_dict(self) -> dict:
        return {
            "all_equal": self.all_equal,
            "ledger_entries": self.ledger_entries,
            "voted": self.voted_total,
            "stored_ballots": self.stored_ballots,
            "per_key": [
                {
                    **k.key.to_dict(),
                    "decoded_count": k.decoded_count,
                    "stored_count": k.stored_count,
                    "ballot_records": k.ballot_records,
                    "voted": k.voted,
                    "components_match": k.components_match,
                    "error": k.error,
                }
                for k in self.keys
            ],
            "divergences": list(self.divergences),
        }


def cross_check(
    spec: ElectionSpec,
    totals: dict[TallyKey, TotalResult],
    ballots: Sequence[DecryptedContest],
    ledger_anon_ids: Sequence[str],
    registry: Registry,
) -> CrossCheckReport:
    """Compare, per tally key: decrypted count field, plaintext counter,
    individually decrypted ballots (count and per-component sums) and voters
    marked as voted; globally: ledger entries, voters marked voted and
    distinct stored ballots."""
    per_key_rows: dict[TallyKey, list[DecryptedContest]] = defaultdict(list)
    divergences = []
    for row in ballots:
        key = TallyKey(row.contest_id, row.state, row.modality)
        per_key_rows[key].append(row)
        if row.error:
            divergences.append(f"ballot {row.anon_id} {row.contest_id}: {row.error}")

    checks = []
    for key in sorted(set(totals) | set(per_key_rows)):
        result = totals.get(key)
        layout = spec.layout(key.contest_id)
        rows = per_key_rows.get(key, [])
        sums = [0] * len(layout.components)
        for row in rows:
            if row.component is not None:
                sums[row.component] += 1
        decoded = result.decoded_count if result else None
        matches = result is not None and result.vector is not None and list(result.vector.counts) == sums
        check = KeyCheck(
            key,
            decoded,
            result.stored_count if result else 0,
            len(rows),
            registry.voted_count(key.state, key.modality),
            matches,
            result.error if result else "no tally for key",
        )
        checks.append(check)
        if not check.equal:
            divergences.append(
                f"{key.contest_id}/{key.state}/{key.modality}: decoded={check.decoded_count} "
                f"stored={check.stored_count} ballots={check.ballot_records} voted={check.voted} "
                f"components_match={check.components_match}"
                + (f" ({check.error})" if check.error else "")
            )

    stored_ids = {row.anon_id for row in ballots}
    ledger_set = set(ledger_anon_ids)
    voted_total = registry.voted_count()
    if not len(ledger_anon_ids) == voted_total == len(stored_ids):
        divergences.append(
            f"global: ledger={len(ledger_anon_ids)} voted={voted_total} stored={len(stored_ids)}"
        )
    for missing in sorted(ledger_set - stored_ids):
        divergences.append(f"ledger AnonID {missing} has no stored ballot")
    for extra in sorted(stored_ids - ledger_set):
        divergences.append(f"stored ballot {extra} is not on the ledger")
    return CrossCheckReport(checks, len(ledger_anon_ids), voted_total, len(stored_ids), divergences)


# --- reports ------------------------------------------------------------------------


def build_results(
    spec: ElectionSpec,
    totals: dict[TallyKey, TotalResult],
    ballots: Sequence[DecryptedContest],
    check: CrossCheckReport,
    generated_at: str | None = None,
) -> dict:
    writeins: dict[TallyKey, Counter] = defaultdict(Counter)
    for row in ballots:
        if row.writein:
            writeins[TallyKey(row.contest_id, row.state, row.modality)][row.writein] += 1
    tallies = []
    for key in sorted(totals):
        result = totals[key]
        layout = spec.layout(key.contest_id)
        counts = result.vector.counts if result.vector else (0,) * len(layout.components)
        tallies.append(
            {
                "contest": key.contest_id,
                "state": key.state,
                "modality": key.modality,
                "counts": [
                    {"label": comp.label, "count": n} for comp, n in zip(layout.components, counts)
                ],
                "ballot_count": result.stored_count,
                "writeins": [
                    {"name": name, "count": n} for name, n in sorted(writeins[key].items())
                ],
            }
        )
    return {
        "election_id": spec.election_id,
        "generated_at": generated_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "tallies": tallies,
        "cross_check": check.to_dict(),
    }


def results_csv(results: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["contest", "state", "modality", "kind", "label", "count"])
    for t in results["tallies"]:
        base = [t["contest"], t["state"], t["modality"]]
        for c in t["counts"]:
            writer.writerow(base + ["choice", c["label"], c["count"]])
        writer.writerow(base + ["ballot_count", "", t["ballot_count"]])
        for w in t["writeins"]:
            writer.writerow(base + ["writein", w["name"], w["count"]])
    return buf.getvalue()


def generate_report(results: dict, out_dir: Path, formats: Sequence[str] = ("json", "csv")) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for fmt in formats:
        if fmt == "json":
            path = out_dir / "results.json"
            path.write_text(json.dumps(results, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        elif fmt == "csv":
            path = out_dir / "results.csv"
            path.write_text(results_csv(results), encoding="utf-8")
        else:
            raise ValueError(f"unknown report format {fmt!r}")
        paths.append(path)
    return paths


# --- directory-level steps used by the CLI ---------------------------------------


def decrypt_election(edir: ElectionDir, partitions: int | None = None) -> tuple[dict, list, CrossCheckReport]:
    edir.require("key_reconstructed", "decrypted", "reported", action="decrypt")
    spec = edir.spec()
    sk = edir.private_key()
    totals = decrypt_totals(sk, spec, edir.tally().totals())
    rows = decrypt_ballots(sk, spec, load_ballot_records(edir), partitions)
    write_decrypted(rows, edir.decrypted_dir / "ballots.jsonl")
    (edir.decrypted_dir / "totals.json").write_text(
        json.dumps(
            [
                {
                    **r.key.to_dict(),
                    "counts": list(r.vector.counts) if r.vector else None,
                    "decoded_count": r.decoded_count,
                    "stored_count": r.stored_count,
                    "error": r.error,
                }
                for r in totals.values()
            ],
            indent=1,
        )
    )
    check = cross_check(spec, totals, rows, edir.ledger().anon_ids(), edir.registry())
    if edir.phase == "key_reconstructed":
        edir.set_phase("decrypted")
    return totals, rows, check


def load_decrypted_totals(edir: ElectionDir) -> dict[TallyKey, TotalResult]:
    data = json.loads((edir.decrypted_dir / "totals.json").read_text())
    out = {}
    for item in data:
        key = TallyKey.from_dict(item)
        vector = (
            TallyVector(tuple(item["counts"]), item["decoded_count"]) if item["counts"] is not None else None
        )
        out[key] = TotalResult(key, vector, item["stored_count"], item["error"])
    return out


@dataclass
class AuditReport:
    ledger_bad_index: int | None
    bad_receipts: dict[str, dict]
    quarantined: int
    cross_check: CrossCheckReport
    missing_ballots: list[str] = field(default_factory=list)
    unlisted_ballots: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.ledger_bad_index is None
            and not self.bad_receipts
            and not self.missing_ballots
            and not self.unlisted_ballots
            and self.cross_check.all_equal
        )

    def findings(self) -> list[str]:
        out = []
        if self.ledger_bad_index is not None:
            out.append(f"ledger hash chain broken at block {self.ledger_bad_index}")
        for anon_id, report in sorted(self.bad_receipts.items()):
            failed = [f"{cid}:{k}" for cid, checks in report.items() for k, ok in checks.items() if not ok]
            out.append(f"ballot {anon_id} failed verification ({', '.join(failed)})")
        out.extend(f"ledger AnonID {a} is missing from the ballot store" for a in self.missing_ballots)
        out.extend(f"stored ballot {a} is not on the ledger" for a in self.unlisted_ballots)
        out.extend(self.cross_check.divergences)
        return out


def audit(edir: ElectionDir, totals: dict | None = None, rows: list | None = None) -> AuditReport:
    """Re-verify the ledger, every stored ballot's signatures and proofs, and
    the cross-check figures."""
    spec = edir.spec()
    pk, vk = edir.public_key(), edir.verify_key()
    ledger = edir.ledger()
    store = edir.ballot_store()
    bad = {}
    for anon_id in store.ids():
        try:
            report = verify_stored_ballot(pk, vk, store.get(anon_id))
        except (ValueError, KeyError) as exc:
            report = {"?": {"readable": False}}
            log.warning("ballot %s unreadable: %s", anon_id, exc)
        if not receipt_ok(report):
            bad[anon_id] = report
    if totals is None:
        totals = load_decrypted_totals(edir)
    if rows is None:
        rows = read_decrypted(edir.decrypted_dir / "ballots.jsonl")
    ledger_ids = ledger.anon_ids()
    check = cross_check(spec, totals, rows, ledger_ids, edir.registry())
    stored = set(store.ids())
    return AuditReport(
        ledger.verify(),
        bad,
        len(edir.tally().quarantine),
        check,
        sorted(set(ledger_ids) - stored),
        sorted(stored - set(ledger_ids)),
    )
