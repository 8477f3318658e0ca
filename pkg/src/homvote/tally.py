"""FIFO, exactly-once homomorphic tallying.

Every (contest, state, modality) triple owns one FIFO stream and one encrypted
running total. Messages are deduplicated at admission on AnonID || contest ID,
and each stream is consumed by at most one worker at a time, so a total is
never read twice before being written back.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import re
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .blindsig import VerifyKey, verify_sig
from .mathcore import digest_concat
from .paillier import PaillierPublicKey, hom_add

log = logging.getLogger(__name__)

MODALITIES = ("remote", "in_person")


class Admission(enum.Enum):
    ACCEPTED = "accepted"
    DUPLICATE = "duplicate"


class Outcome(enum.Enum):
    APPLIED = "applied"
    REJECTED = "rejected"
    EMPTY = "empty"


@dataclass(frozen=True, order=True)
class TallyKey:
    contest_id: str
    state: str
    modality: str

    @property
    def slug(self) -> str:
        raw = f"{self.contest_id}__{self.state}__{self.modality}"
        return re.sub(r"[^A-Za-z0-9_.-]", "-", raw)

    def to_dict(self) -> dict:
        return {"contest": self.contest_id, "state": self.state, "modality": self.modality}

    @classmethod
    def from_dict(cls, data: dict) -> "TallyKey":
        return cls(data["contest"], data["state"], data["modality"])


def contest_digest(
    pk: PaillierPublicKey, vk: VerifyKey, ciphertexts: Sequence[int], writein: int
) -> int:
    """H(E(m) || E(w)) for a contest; sub-vector ciphertexts are joined in
    index order, each at the fixed ciphertext width."""
    first = b"".join(pk.ciphertext_bytes(c) for c in ciphertexts)
    return digest_concat(first, pk.ciphertext_bytes(writein), vk.n)


@dataclass(frozen=True)
class ContestMessage:
    anon_id: str
    contest_id: str
    tally_key: TallyKey
    ciphertexts: tuple[int, ...]
    writein: int
    signature: int

    @property
    def dedup_key(self) -> str:
        # anon_id is fixed-width hex, so plain concatenation is unambiguous
        return self.anon_id + self.contest_id

    def to_dict(self) -> dict:
        return {
            "anon_id": self.anon_id,
            "contest_id": self.contest_id,
            "tally_key": self.tally_key.to_dict(),
            "ciphertexts": [format(c, "x") for c in self.ciphertexts],
            "writein": format(self.writein, "x"),
            "signature": format(self.signature, "x"),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ContestMessage":
        return cls(
            data["anon_id"],
            data["contest_id"],
            TallyKey.from_dict(data["tally_key"]),
            tuple(int(c, 16) for c in data["ciphertexts"]),
            int(data["writein"], 16),
            int(data["signature"], 16),
        )


@dataclass(frozen=True)
class TallyState:
    encrypted_totals: tuple[int, ...] = ()
    ballot_count: int = 0
    updated_at: float | None = None
    last_applied: str | None = None

    def to_dict(self) -> dict:
        return {
            "encrypted_totals": [format(c, "x") for c in self.encrypted_totals],
            "ballot_count": self.ballot_count,
            "updated_at": self.updated_at,
            "last_applied": self.last_applied,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TallyState":
        return cls(
            tuple(int(c, 16) for c in data["encrypted_totals"]),
            int(data["ballot_count"]),
            data.get("updated_at"),
            data.get("last_applied"),
        )


@dataclass
class _Stream:
    pending: deque = field(default_factory=deque)
    lock: threading.Lock = field(default_factory=threading.Lock)


class TallyService:
    """Per-key FIFO queues with admission-time deduplication.

    With ``directory`` set, queue records go to ``queues/<key>.jsonl`` and
    totals to ``totals/<key>.json``; a new instance over the same directory
    resumes without re-applying anything.
    """

    def __init__(
        self,
        pk: PaillierPublicKey,
        vk: VerifyKey,
        directory: Path | str | None = None,
    ):
        self.pk = pk
        self.vk = vk
        self.directory = Path(directory) if directory is not None else None
        self._admit_lock = threading.Lock()
        self._streams: dict[TallyKey, _Stream] = {}
        self._seen: set[str] = set()
        self._totals: dict[TallyKey, TallyState] = {}
        self._quarantine: list[tuple[ContestMessage, str]] = []
        self._file_locks: dict[TallyKey, threading.Lock] = {}
        if self.directory is not None:
            (self.directory / "queues").mkdir(parents=True, exist_ok=True)
            (self.directory / "totals").mkdir(parents=True, exist_ok=True)
            self._recover()

    # persistence -------------------------------------------------------

    def _queue_path(self, key: TallyKey) -> Path:
        return self.directory / "queues" / f"{key.slug}.jsonl"

    def _totals_path(self, key: TallyKey) -> Path:
        return self.directory / "totals" / f"{key.slug}.json"

    def _append(self, key: TallyKey, record: dict) -> None:
        if self.directory is None:
            return
        lock = self._file_locks.setdefault(key, threading.Lock())
        with lock, open(self._queue_path(key), "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()

    def _write_totals(self, key: TallyKey, state: TallyState) -> None:
        if self.directory is None:
            return
        path = self._totals_path(key)
        tmp = path.with_suffix(".tmp")
        payload = {"key": key.to_dict(), **state.to_dict()}
        tmp.write_text(json.dumps(payload, sort_keys=True))
        os.replace(tmp, path)

    def _recover(self) -> None:
        for path in sorted((self.directory / "totals").glob("*.json")):
            data = json.loads(path.read_text())
            self._totals[TallyKey.from_dict(data["key"])] = TallyState.from_dict(data)
        for path in sorted((self.directory / "queues").glob("*.jsonl")):
            enqueued: list[ContestMessage] = []
            done: set[str] = set()
            for line in path.read_text().splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                if rec["op"] == "enqueue":
                    msg = ContestMessage.from_dict(rec["msg"])
                    enqueued.append(msg)
                    self._seen.add(msg.dedup_key)
                else:
                    done.add(rec["dedup"])
                    if rec["op"] == "rejected":
                        self._quarantine.append((ContestMessage.from_dict(rec["msg"]), rec["reason"]))
            for msg in enqueued:
                if msg.dedup_key in done:
                    continue
                state = self._totals.get(msg.tally_key)
                if state is not None and state.last_applied == msg.dedup_key:
                    # totals were written but the crash hit before the log line
                    self._append(msg.tally_key, {"op": "applied", "dedup": msg.dedup_key})
                    continue
                self._stream(msg.tally_key).pending.append(msg)

    # queue operations --------------------------------------------------

    def _stream(self, key: TallyKey) -> _Stream:
        stream = self._streams.get(key)
        if stream is None:
            stream = self._streams.setdefault(key, _Stream())
        return stream

    def enqueue(self, msg: ContestMessage) -> Admission:
        with self._admit_lock:
            if msg.dedup_key in self._seen:
                log.info("duplicate contest message %s dropped", msg.dedup_key[:16])
                return Admission.DUPLICATE
            self._seen.add(msg.dedup_key)
            self._append(msg.tally_key, {"op": "enqueue", "msg": msg.to_dict()})
            self._stream(msg.tally_key).pending.append(msg)
        return Admission.ACCEPTED

    def process_next(self, key: TallyKey) -> Outcome:
        stream = self._stream(key)
        with stream.lock:
            with self._admit_lock:
                if not stream.pending:
                    return Outcome.EMPTY
                msg = stream.pending.popleft()
            digest = contest_digest(self.pk, self.vk, msg.ciphertexts, msg.writein)
            if not verify_sig(self.vk, digest, msg.signature):
                self._quarantine.append((msg, "SignatureInvalid"))
                self._append(
                    key,
                    {"op": "rejected", "dedup": msg.dedup_key, "reason": "SignatureInvalid",
                     "msg": msg.to_dict()},
                )
                log.warning("quarantined %s: signature invalid", msg.dedup_key[:16])
                return Outcome.REJECTED

            current = self._totals.get(key)
            if current is None or current.ballot_count == 0:
                totals = tuple(msg.ciphertexts)
                count = 1
            else:
                if len(current.encrypted_totals) != len(msg.ciphertexts):
                    self._quarantine.append((msg, "ShapeMismatch"))
                    self._append(
                        key,
                        {"op": "rejected", "dedup": msg.dedup_key, "reason": "ShapeMismatch",
                         "msg": msg.to_dict()},
                    )
                    return Outcome.REJECTED
                totals = tuple(
                    hom_add(self.pk, a, b) for a, b in zip(current.encrypted_totals, msg.ciphertexts)
                )
                count = current.ballot_count + 1
            state = TallyState(totals, count, time.time(), msg.dedup_key)
            self._write_totals(key, state)
            self._totals[key] = state
            self._append(key, {"op": "applied", "dedup": msg.dedup_key})
            return Outcome.APPLIED

    def keys(self) -> list[TallyKey]:
        with self._admit_lock:
            return sorted(set(self._streams) | set(self._totals))

    def pending(self, key: TallyKey | None = None) -> int:
        with self._admit_lock:
            if key is not None:
                return len(self._stream(key).pending)
            return sum(len(s.pending) for s in self._streams.values())

    def drain(self, key: TallyKey | None = None) -> int:
        """Process until the selected queue (or every queue) is empty."""
        applied = 0
        targets = [key] if key is not None else None
        while True:
            progressed = False
            for k in targets or self.keys():
                while True:
                    outcome = self.process_next(k)
                    if outcome is Outcome.EMPTY:
                        break
                    progressed = True
                    if outcome is Outcome.APPLIED:
                        applied += 1
            if not progressed:
                return applied

    def get_total(self, key: TallyKey) -> TallyState:
        return self._totals.get(key, TallyState())

    def totals(self) -> dict[TallyKey, TallyState]:
        return dict(self._totals)

    @property
    def quarantine(self) -> list[tuple[ContestMessage, str]]:
        return list(self._quarantine)


class UnsafeTotalsTable:
    """Read-modify-write totals with no queue and no locking.

    Exists only as a negative control: concurrent updates to one key can read
    the same total and overwrite each other.
    """

    def __init__(self, pk: PaillierPublicKey, think_time: float = 0.0):
        self.pk = pk
        self.think_time = think_time
        self._totals: dict[TallyKey, TallyState] = {}

    def update(self, msg: ContestMessage) -> None:
        current = self._totals.get(msg.tally_key)
        if current is None:
            totals, count = tuple(msg.ciphertexts), 1
        else:
            totals = tuple(
                hom_add(self.pk, a, b) for a, b in zip(current.encrypted_totals, msg.ciphertexts)
            )
            count = current.ballot_count + 1
        if self.think_time:
            time.sleep(self.think_time)
        self._totals[msg.tally_key] = TallyState(totals, count, time.time())

    def get_total(self, key: TallyKey) -> TallyState:
        return self._totals.get(key, TallyState())


def drain_concurrently(service: TallyService, keys: Iterable[TallyKey], workers: int) -> int:
    """Drain several keys in parallel threads; per-key exclusion still holds."""
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return sum(pool.map(service.drain, list(keys)))
