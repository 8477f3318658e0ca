"""Backend of the voting flow.

The server keeps two stores that never reference each other: the voter
registry (voter_id -> status) and the ballot store (AnonID -> encrypted
contests). A submission is verified in full before anything is written, and
the writes (ballot, ledger block, tally messages, voted flag) happen in one
serialized commit step.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import zkp
from .blindsig import SignatureKeypair, VerifyKey, sign_blinded, verify_sig
from .config import ElectionSpec, contest_to_dict
from .paillier import PaillierPublicKey
from .tally import ContestMessage, TallyKey, TallyService, contest_digest

log = logging.getLogger(__name__)

REGISTERED = "registered"
VOTED = "voted"
ZERO_HASH = bytes(32)


class VotingError(Exception):
    """Base class for domain rejections in the voting flow."""


class UnknownVoter(VotingError):
    pass


class SessionAlreadyActive(VotingError):
    pass


class SessionInvalid(VotingError):
    pass


class AlreadyVoted(VotingError):
    pass


class SignatureInvalid(VotingError):
    pass


class ProofInvalid(VotingError):
    pass


class WrongBallotStyle(VotingError):
    pass


class DuplicateBallot(VotingError):
    pass


class UnknownAnonId(VotingError):
    pass


ERRORS = {
    cls.__name__: cls
    for cls in (
        UnknownVoter, SessionAlreadyActive, SessionInvalid, AlreadyVoted, SignatureInvalid,
        ProofInvalid, WrongBallotStyle, DuplicateBallot, UnknownAnonId,
    )
}


# --- voter registry ----------------------------------------------------------


@dataclass(frozen=True)
class VoterRecord:
    voter_id: str
    state: str
    modality: str
    status: str = REGISTERED


class Registry:
    FIELDS = ("voter_id", "state", "modality", "status")

    def __init__(self, path: Path | str | None = None):
        self.path = Path(path) if path is not None else None
        self._records: dict[str, VoterRecord] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load(self.path)

    def _load(self, path: Path) -> None:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rec = VoterRecord(
                    row["voter_id"], row["state"], row["modality"], row.get("status") or REGISTERED
                )
                self._records[rec.voter_id] = rec

    def import_csv(self, path: Path | str) -> int:
        before = len(self._records)
        self._load(Path(path))
        self.save()
        return len(self._records) - before

    def save(self) -> None:
        if self.path is None:
            return
        tmp = self.path.with_suffix(".tmp")
        with open(tmp, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.FIELDS)
            writer.writeheader()
            for rec in self._records.values():
                writer.writerow(rec.__dict__)
        os.replace(tmp, self.path)

    def add(self, voter_id: str, state: str, modality: str) -> VoterRecord:
        with self._lock:
            if voter_id in self._records:
                raise ValueError(f"voter {voter_id} already registered")
            rec = VoterRecord(voter_id, state, modality)
            self._records[voter_id] = rec
            return rec

    def get(self, voter_id: str) -> VoterRecord:
        try:
            return self._records[voter_id]
        except KeyError:
            raise UnknownVoter(voter_id) from None

    def mark_voted(self, voter_id: str) -> None:
        with self._lock:
            rec = self.get(voter_id)
            if rec.status != REGISTERED:
                raise AlreadyVoted(voter_id)
            self._records[voter_id] = replace(rec, status=VOTED)
            self.save()

    def __iter__(self):
        return iter(list(self._records.values()))

    def __len__(self) -> int:
        return len(self._records)

    def voted_count(self, state: str | None = None, modality: str | None = None) -> int:
        return sum(
            1
            for r in self._records.values()
            if r.status == VOTED
            and (state is None or r.state == state)
            and (modality is None or r.modality == modality)
        )


# --- sessions and ratchet ---------------------------------------------------


@dataclass(frozen=True)
class Session:
    voter_id: str
    shared_state: bytes
    counter: int = 0


def public_point_bytes(key: ec.EllipticCurvePrivateKey) -> bytes:
    return key.public_key().public_bytes(
        serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint
    )


def new_ephemeral() -> ec.EllipticCurvePrivateKey:
    return ec.generate_private_key(ec.SECP256R1())


def handshake(
    voter_id: str, peer_public_point: bytes, own_ephemeral: ec.EllipticCurvePrivateKey
) -> Session:
    """ECDH over P-256; either side calls this with its own ephemeral key and
    the other side's public point, and both get the same session."""
    peer = ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256R1(), peer_public_point)
    shared_x = own_ephemeral.exchange(ec.ECDH(), peer)
    return Session(voter_id, hashlib.sha256(shared_x).digest(), 0)


def ratchet_advance(session: Session) -> tuple[bytes, Session]:
    message_key = hashlib.sha256(
        session.shared_state + session.counter.to_bytes(8, "big")
    ).digest()
    nxt = Session(session.voter_id, hashlib.sha256(session.shared_state).digest(), session.counter + 1)
    return message_key, nxt


class Channel:
    """One end of an encrypted, ratcheted channel.

    Every frame, in either direction, consumes one ratchet step on both ends,
    so a captured frame cannot be replayed once the peer has moved on.
    """

    def __init__(self, session: Session):
        self.session = session
        self._lock = threading.Lock()

    def seal(self, payload: dict) -> bytes:
        with self._lock:
            key, nxt = ratchet_advance(self.session)
            nonce = os.urandom(12)
            aad = self.session.counter.to_bytes(8, "big")
            body = AESGCM(key).encrypt(nonce, json.dumps(payload).encode(), aad)
            self.session = nxt
            return nonce + body

    def open(self, frame: bytes) -> dict:
        with self._lock:
            key, nxt = ratchet_advance(self.session)
            aad = self.session.counter.to_bytes(8, "big")
            try:
                plain = AESGCM(key).decrypt(frame[:12], frame[12:], aad)
            except (InvalidTag, ValueError):
                # state untouched, so a replayed or forged frame cannot desync us
                raise SessionInvalid("frame failed authentication") from None
            self.session = nxt
            return json.loads(plain)


# --- ballots ------------------------------------------------------------------


@dataclass(frozen=True)
class ContestBallot:
    contest_id: str
    ciphertexts: tuple[int, ...]
    writein: int
    proofs: tuple[zkp.ZkProof, ...]
    signature: int

    def to_dict(self) -> dict:
        return {
            "contest_id": self.contest_id,
            "ciphertexts": [format(c, "x") for c in self.ciphertexts],
            "writein": format(self.writein, "x"),
            "proofs": [p.to_dict() for p in self.proofs],
            "signature": format(self.signature, "x"),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ContestBallot":
        return cls(
            data["contest_id"],
            tuple(int(c, 16) for c in data["ciphertexts"]),
            int(data["writein"], 16),
            tuple(zkp.ZkProof.from_dict(p) for p in data["proofs"]),
            int(data["signature"], 16),
        )


@dataclass(frozen=True)
class BallotPackage:
    contests: tuple[ContestBallot, ...]

    def to_dict(self) -> dict:
        return {"contests": [c.to_dict() for c in self.contests]}

    @classmethod
    def from_dict(cls, data: dict) -> "BallotPackage":
        return cls(tuple(ContestBallot.from_dict(c) for c in data["contests"]))


def compute_anon_id(pk: PaillierPublicKey, package: BallotPackage) -> str:
    """SHA-256 over every ciphertext of the ballot, in contest order."""
    h = hashlib.sha256()
    for contest in package.contests:
        for c in contest.ciphertexts:
            h.update(pk.ciphertext_bytes(c))
        h.update(pk.ciphertext_bytes(contest.writein))
    return h.hexdigest()


class BallotStore:
    """Encrypted ballots keyed by AnonID; one JSON file each under ``ballots/``."""

    def __init__(self, directory: Path | str | None = None):
        self.directory = Path(directory) if directory is not None else None
        self._memory: dict[str, dict] = {}
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, anon_id: str) -> Path:
        return self.directory / anon_id[:2] / f"{anon_id}.json"

    def put(self, anon_id: str, record: dict) -> None:
        if self.directory is None:
            self._memory[anon_id] = copy.deepcopy(record)
            return
        path = self._path(anon_id)
        path.parent.mkdir(exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(record, sort_keys=True, indent=1))
        os.replace(tmp, path)

    def get(self, anon_id: str) -> dict:
        if self.directory is None:
            if anon_id not in self._memory:
                raise UnknownAnonId(anon_id)
            return copy.deepcopy(self._memory[anon_id])
        path = self._path(anon_id) if len(anon_id) >= 2 else None
        if path is None or not path.exists():
            raise UnknownAnonId(anon_id)
        return json.loads(path.read_text())

    def exists(self, anon_id: str) -> bool:
        if self.directory is None:
            return anon_id in self._memory
        return self._path(anon_id).exists()

    def delete(self, anon_id: str) -> None:
        if self.directory is None:
            self._memory.pop(anon_id, None)
        else:
            self._path(anon_id).unlink(missing_ok=True)

    def ids(self) -> list[str]:
        if self.directory is None:
            return sorted(self._memory)
        return sorted(p.stem for p in self.directory.glob("*/*.json"))

    def __len__(self) -> int:
        return len(self.ids())


# --- ledger ---------------------------------------------------------------------


@dataclass(frozen=True)
class LedgerBlock:
    index: int
    prev_hash: bytes
    anon_id: bytes
    timestamp: int  # microseconds since the epoch
    block_hash: bytes

    @staticmethod
    def compute_hash(index: int, prev_hash: bytes, anon_id: bytes, timestamp: int) -> bytes:
        return hashlib.sha256(
            index.to_bytes(8, "big") + prev_hash + anon_id + timestamp.to_bytes(8, "big")
        ).digest()

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "prev_hash": self.prev_hash.hex(),
            "anon_id": self.anon_id.hex(),
            "timestamp": self.timestamp,
            "block_hash": self.block_hash.hex(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LedgerBlock":
        return cls(
            int(data["index"]),
            bytes.fromhex(data["prev_hash"]),
            bytes.fromhex(data["anon_id"]),
            int(data["timestamp"]),
            bytes.fromhex(data["block_hash"]),
        )


class Ledger:
    """Append-only SHA-256 hash chain of AnonIDs, exported as JSON lines."""

    def __init__(self, path: Path | str | None = None):
        self.path = Path(path) if path is not None else None
        self._blocks: list[LedgerBlock] = []
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists() and self.path.stat().st_size:
            for line in self.path.read_text().splitlines():
                if line.strip():
                    self._blocks.append(LedgerBlock.from_dict(json.loads(line)))
        if not self._blocks:
            self._push(ZERO_HASH)

    def _push(self, anon_id: bytes) -> LedgerBlock:
        index = len(self._blocks)
        prev = self._blocks[-1].block_hash if self._blocks else ZERO_HASH
        ts = time.time_ns() // 1000
        block = LedgerBlock(index, prev, anon_id, ts, LedgerBlock.compute_hash(index, prev, anon_id, ts))
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(block.to_dict()) + "\n")
        self._blocks.append(block)
        return block

    def append(self, anon_id: str) -> LedgerBlock:
        with self._lock:
            return self._push(bytes.fromhex(anon_id))

    def verify(self) -> int | None:
        """None when every link checks out, else the first bad block index."""
        prev = ZERO_HASH
        for i, block in enumerate(self._blocks):
            expected = LedgerBlock.compute_hash(i, prev, block.anon_id, block.timestamp)
            if block.index != i or block.prev_hash != prev or block.block_hash != expected:
                return i
            prev = block.block_hash
        return None

    @property
    def blocks(self) -> list[LedgerBlock]:
        return list(self._blocks)

    def anon_ids(self) -> list[str]:
        return [b.anon_id.hex() for b in self._blocks[1:]]

    def __len__(self) -> int:
        return len(self._blocks)


# --- server ---------------------------------------------------------------------


class BallotServer:
    """Backend endpoints. Frame-level entry points (``handle``) wrap the
    direct methods used by tests and the admin tooling."""

    def __init__(
        self,
        spec: ElectionSpec,
        pk: PaillierPublicKey,
        signer: SignatureKeypair,
        registry: Registry,
        store: BallotStore,
        ledger: Ledger,
        tally: TallyService,
    ):
        self.spec = spec
        self.pk = pk
        self.signer = signer
        self.vk: VerifyKey = signer.verify_key
        self.registry = registry
        self.store = store
        self.ledger = ledger
        self.tally = tally
        self._sessions: dict[str, Channel] = {}
        self._session_lock = threading.Lock()
        self._commit_lock = threading.Lock()

    # sessions

    def open_session(self, voter_id: str, voter_public_point: bytes) -> bytes:
        self.registry.get(voter_id)
        ephemeral = new_ephemeral()
        session = handshake(voter_id, voter_public_point, ephemeral)
        with self._session_lock:
            if voter_id in self._sessions:
                raise SessionAlreadyActive(voter_id)
            self._sessions[voter_id] = Channel(session)
        return public_point_bytes(ephemeral)

    def close_session(self, voter_id: str) -> None:
        with self._session_lock:
            self._sessions.pop(voter_id, None)

    def has_session(self, voter_id: str) -> bool:
        return voter_id in self._sessions

    def _channel(self, voter_id: str) -> Channel:
        channel = self._sessions.get(voter_id)
        if channel is None:
            raise SessionInvalid(f"no active session for {voter_id}")
        return channel

    def handle(self, voter_id: str, frame: bytes) -> bytes:
        """Decrypt a request frame, dispatch it, and seal the response."""
        channel = self._channel(voter_id)
        request = channel.open(frame)
        try:
            kind = request.get("type")
            if kind == "get_ballot":
                body = self.ballot_for(voter_id)
            elif kind == "blind_sign":
                sigs = self.issue_blind_signature(voter_id, [int(b, 16) for b in request["blinded"]])
                body = {"signatures": [format(s, "x") for s in sigs]}
            elif kind == "submit":
                package = BallotPackage.from_dict(request["package"])
                body = {"anon_id": self.submit_ballot(voter_id, package)}
            else:
                raise SessionInvalid(f"unknown request {kind!r}")
            response = {"ok": True, **body}
        except VotingError as exc:
            response = {"ok": False, "error": type(exc).__name__, "detail": str(exc)}
        except (KeyError, ValueError, TypeError) as exc:
            response = {"ok": False, "error": "SessionInvalid", "detail": f"malformed request: {exc}"}
        return channel.seal(response)

    # endpoints

    def ballot_for(self, voter_id: str) -> dict:
        voter = self.registry.get(voter_id)
        contests = [
            contest_to_dict(self.spec.contest(cid).spec) for cid in self.spec.ballot_style(voter.state)
        ]
        return {
            "election_id": self.spec.election_id,
            "contests": contests,
            "width": self.spec.width,
            "capacity": self.spec.capacity,
            "paillier": self.pk.to_dict(),
            "verify_key": self.vk.to_dict(),
        }

    def issue_blind_signature(self, voter_id: str, blinded_digests: list[int]) -> list[int]:
        voter = self.registry.get(voter_id)
        if voter.status != REGISTERED:
            raise AlreadyVoted(voter_id)
        style = self.spec.ballot_style(voter.state)
        if len(blinded_digests) != len(style):
            raise WrongBallotStyle(f"expected {len(style)} blinded digests")
        if any(not 0 <= b < self.vk.n for b in blinded_digests):
            raise SessionInvalid("blinded digest outside the signing modulus")
        return [sign_blinded(self.signer, b) for b in blinded_digests]

    def check_package(self, state: str, package: BallotPackage) -> None:
        """All stateless checks on a package; raises on the first failure.

        Proofs are checked before signatures so that a ciphertext altered
        after signing is reported as a proof failure."""
        style = self.spec.ballot_style(state)
        if tuple(c.contest_id for c in package.contests) != style:
            raise WrongBallotStyle(f"expected contests {list(style)}")
        for contest in package.contests:
            layout = self.spec.layout(contest.contest_id)
            if (
                len(contest.ciphertexts) != layout.subvector_count
                or len(contest.proofs) != layout.subvector_count
            ):
                raise WrongBallotStyle(f"{contest.contest_id}: wrong number of sub-vectors")
        for contest in package.contests:
            for c, proof in zip(contest.ciphertexts, contest.proofs):
                if not zkp.verify(self.pk, c, proof):
                    raise ProofInvalid(contest.contest_id)
            if not self.pk.is_valid_ciphertext(contest.writein):
                raise ProofInvalid(f"{contest.contest_id}: write-in ciphertext malformed")
        for contest in package.contests:
            digest = contest_digest(self.pk, self.vk, contest.ciphertexts, contest.writein)
            if not verify_sig(self.vk, digest, contest.signature):
                raise SignatureInvalid(contest.contest_id)

    def submit_ballot(self, voter_id: str, package: BallotPackage) -> str:
        voter = self.registry.get(voter_id)
        if voter.status != REGISTERED:
            raise AlreadyVoted(voter_id)
        self.check_package(voter.state, package)
        anon_id = compute_anon_id(self.pk, package)

        record = {
            "anon_id": anon_id,
            "election_id": self.spec.election_id,
            "state": voter.state,
            "modality": voter.modality,
            "contests": [c.to_dict() for c in package.contests],
        }
        messages = [
            ContestMessage(
                anon_id,
                c.contest_id,
                TallyKey(c.contest_id, voter.state, voter.modality),
                c.ciphertexts,
                c.writein,
                c.signature,
            )
            for c in package.contests
        ]
        with self._commit_lock:
            if self.registry.get(voter_id).status != REGISTERED:
                raise AlreadyVoted(voter_id)
            if self.store.exists(anon_id):
                raise DuplicateBallot(anon_id)
            self.store.put(anon_id, record)
            try:
                self.ledger.append(anon_id)
            except Exception:
                self.store.delete(anon_id)
                raise
            for msg in messages:
                self.tally.enqueue(msg)
            self.registry.mark_voted(voter_id)
        log.debug("ballot %s accepted", anon_id[:12])
        return anon_id

    def verify_receipt(self, anon_id: str) -> dict[str, dict[str, bool]]:
        return verify_stored_ballot(self.pk, self.vk, self.store.get(anon_id))


def verify_stored_ballot(pk: PaillierPublicKey, vk: VerifyKey, record: dict) -> dict[str, dict[str, bool]]:
    """Per-contest signature and proof checks over a stored ballot record."""
    report = {}
    for raw in record["contests"]:
        try:
            contest = ContestBallot.from_dict(raw)
        except (KeyError, ValueError, TypeError):
            report[raw.get("contest_id", "?")] = {"signature": False, "proofs": False}
            continue
        digest = contest_digest(pk, vk, contest.ciphertexts, contest.writein)
        proofs_ok = len(contest.proofs) == len(contest.ciphertexts) and all(
            zkp.verify(pk, c, p) for c, p in zip(contest.ciphertexts, contest.proofs)
        )
        report[contest.contest_id] = {
            "signature": verify_sig(vk, digest, contest.signature),
            "proofs": proofs_ok,
        }
    return report


def receipt_ok(report: dict[str, dict[str, bool]]) -> bool:
    return all(all(v.values()) for v in report.values())
