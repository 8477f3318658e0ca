"""Synthetic voters driven concurrently against a ballot server."""

from __future__ import annotations

import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .client import VoterClient
from .config import ElectionSpec
from .election import REGISTERED, BallotPackage, BallotServer, VotingError
from .encoding import ContestSpec, Selection
from .paillier import hom_scale

WRITEIN_NAMES = ("ANA", "LUIS", "MARÍA JOSÉ", "PEDRO", "ZOË", "JOSÉ ÁNGEL")


@dataclass
class SimulationResult:
    accepted: int = 0
    rejected: dict[str, int] = field(default_factory=dict)
    anon_ids: list[str] = field(default_factory=list)
    # plaintext oracle: (contest, state, modality) -> component index -> count
    oracle: dict[tuple[str, str, str], dict[int, int]] = field(default_factory=dict)
    writeins: dict[tuple[str, str, str], dict[str, int]] = field(default_factory=dict)
    tampered_voters: list[str] = field(default_factory=list)
    duplicate_voters: list[str] = field(default_factory=list)
    elapsed: float = 0.0

    def reject(self, name: str) -> None:
        self.rejected[name] = self.rejected.get(name, 0) + 1


def random_selection(spec: ContestSpec, rng: random.Random, writein_rate: float = 0.1) -> Selection:
    roll = rng.random()
    if spec.allow_writein and roll < writein_rate:
        return Selection.writein(rng.choice(WRITEIN_NAMES))
    if spec.allow_novote and roll < writein_rate * 1.5:
        return Selection.novote()
    options = [("party", i) for i in spec.standalone] + [("coalition", c) for c in spec.coalitions]
    kind, value = rng.choice(options)
    if kind == "party":
        return Selection.of(value)
    size = rng.randint(1, len(value))
    return Selection.of(*sorted(rng.sample(value, size)))


def tamper_package(server: BallotServer, package: BallotPackage, k: int = 2) -> BallotPackage:
    """Scale the first sub-vector ciphertext of the first contest by k after signing."""
    first = package.contests[0]
    altered = (hom_scale(server.pk, first.ciphertexts[0], k),) + tuple(first.ciphertexts[1:])
    return BallotPackage((replace(first, ciphertexts=altered),) + tuple(package.contests[1:]))


def ensure_voters(
    server: BallotServer,
    count: int,
    rng: random.Random,
    states: list[str] | None = None,
    modalities: list[str] | None = None,
) -> list[str]:
    """Pick ``count`` not-yet-voted registered voters, registering synthetic
    ones (``voter-NNNNNN``) when the registry runs short."""
    registry = server.registry
    available = [r.voter_id for r in registry if r.status == REGISTERED]
    chosen = available[:count]
    states = states or list(server.spec.states)
    modalities = modalities or list(server.spec.modalities)
    serial = len(registry)
    while len(chosen) < count:
        voter_id = f"voter-{serial:06d}"
        serial += 1
        try:
            registry.get(voter_id)
            continue
        except VotingError:
            pass
        registry.add(voter_id, rng.choice(states), rng.choice(modalities))
        chosen.append(voter_id)
    registry.save()
    return chosen


def run_simulation(
    server: BallotServer,
    voters: int,
    workers: int = 4,
    duplicates: int = 0,
    tamper: int = 0,
    seed: int | None = None,
    rate: float | None = None,
    states: list[str] | None = None,
    modalities: list[str] | None = None,
    consumer: bool = False,
) -> SimulationResult:
    """Drive ``voters`` voters through handshake, blind signing and submission.

    ``tamper`` of them first submit a package altered after signing (counted
    as a rejection) and then vote honestly; ``duplicates`` of them try to vote
    a second time over a fresh session. With ``consumer`` set, a background
    thread drains the tally queues while votes arrive.
    """
    if duplicates > voters or tamper > voters:
        raise ValueError("duplicates and tamper cannot exceed the number of voters")
    rng = random.Random(seed)
    result = SimulationResult()
    if voters == 0:
        return result
    spec: ElectionSpec = server.spec
    ids = ensure_voters(server, voters, rng, states, modalities)
    tampered = set(rng.sample(ids, tamper))
    dup = rng.sample(ids, duplicates)
    result.tampered_voters = sorted(tampered)
    result.duplicate_voters = sorted(dup)

    plans = {}
    for voter_id in ids:
        rec = server.registry.get(voter_id)
        plans[voter_id] = [
            random_selection(spec.contest(cid).spec, rng) for cid in spec.ballot_style(rec.state)
        ]
    # duplicates race the originals in the same pool
    jobs = ids + dup
    rng.shuffle(jobs)
    lock = threading.Lock()
    claimed: set[str] = set()
    start = time.perf_counter()

    def session_client(voter_id: str) -> VoterClient:
        client = VoterClient(voter_id, server)
        for _ in range(2000):
            try:
                client.connect()
                return client
            except VotingError as exc:
                if type(exc).__name__ != "SessionAlreadyActive":
                    raise
                time.sleep(0.002)
        raise TimeoutError(f"session for {voter_id} never freed")

    def run(job_index: int, voter_id: str) -> None:
        if rate:
            delay = start + job_index / rate - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
        selections = plans[voter_id]
        client = session_client(voter_id)
        # whichever attempt reaches the server first is the voter's real one
        with lock:
            primary = voter_id not in claimed
            claimed.add(voter_id)
        try:
            client.fetch_ballot()
            package = client.obtain_signatures(client.prepare(selections))
            if primary and voter_id in tampered:
                try:
                    client.submit(tamper_package(server, package))
                except VotingError as exc:
                    with lock:
                        result.reject(type(exc).__name__)
            anon_id = client.submit(package)
        except VotingError as exc:
            with lock:
                result.reject(type(exc).__name__)
            return
        finally:
            client.close()
        rec = server.registry.get(voter_id)
        with lock:
            result.accepted += 1
            result.anon_ids.append(anon_id)
            for cid, sel, layout in zip(spec.ballot_style(rec.state), selections, client.layouts):
                key = (cid, rec.state, rec.modality)
                component = layout.component_for(sel)
                counts = result.oracle.setdefault(key, {})
                counts[component] = counts.get(component, 0) + 1
                if sel.kind == "writein":
                    names = result.writeins.setdefault(key, {})
                    names[sel.name] = names.get(sel.name, 0) + 1

    stop = threading.Event()
    drainer = None
    if consumer:
        def consume():
            while not stop.is_set():
                if not server.tally.drain():
                    time.sleep(0.005)

        drainer = threading.Thread(target=consume, daemon=True)
        drainer.start()
    try:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            futures = [pool.submit(run, i, v) for i, v in enumerate(jobs)]
            for f in futures:
                f.result()
    finally:
        stop.set()
        if drainer is not None:
            drainer.join()
    result.anon_ids.sort()
    result.elapsed = time.perf_counter() - start
    return result
