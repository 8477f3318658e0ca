import hashlib
import json
import random
import threading

import pytest

from homvote.blindsig import sign
from homvote.config import fixture_spec
from homvote.encoding import Selection, decode_tally, encode_selection
from homvote.paillier import decrypt, encrypt
from homvote.tally import (
    Admission,
    ContestMessage,
    Outcome,
    TallyKey,
    TallyService,
    UnsafeTotalsTable,
    contest_digest,
    drain_concurrently,
)

LAYOUT = fixture_spec("presidential").layout("president")
KEY = TallyKey("president", "CDMX", "remote")


def make_message(pk, signer, component=0, key=KEY, anon=None, contest="president"):
    sel = Selection.of(component) if component < 7 else Selection.novote()
    (m,) = encode_selection(LAYOUT, sel).subvectors
    c, w = encrypt(pk, m), encrypt(pk, 0)
    anon = anon or hashlib.sha256(random.randbytes(16)).hexdigest()
    sig = sign(signer, contest_digest(pk, signer.verify_key, [c], w))
    return ContestMessage(anon, contest, key, (c,), w, sig)


def service(keys512, signer512, directory=None):
    return TallyService(keys512[0], signer512.verify_key, directory)


def test_enqueue_dedup(keys512, signer512):
    svc = service(keys512, signer512)
    msg = make_message(keys512[0], signer512)
    assert svc.enqueue(msg) is Admission.ACCEPTED
    assert svc.enqueue(msg) is Admission.DUPLICATE
    assert svc.pending(KEY) == 1
    other = ContestMessage(msg.anon_id, "senate", msg.tally_key, msg.ciphertexts, msg.writein, msg.signature)
    assert svc.enqueue(other) is Admission.ACCEPTED


def test_process_first_and_second(keys512, signer512):
    pk, sk = keys512
    svc = service(keys512, signer512)
    assert svc.get_total(KEY).ballot_count == 0
    first = make_message(pk, signer512, 0)
    svc.enqueue(first)
    assert svc.process_next(KEY) is Outcome.APPLIED
    state = svc.get_total(KEY)
    assert state.ballot_count == 1 and state.encrypted_totals == first.ciphertexts
    svc.enqueue(make_message(pk, signer512, 2))
    svc.process_next(KEY)
    snapshot = svc.get_total(KEY)
    assert snapshot.ballot_count == 2
    decoded = decode_tally(LAYOUT, [decrypt(sk, snapshot.encrypted_totals[0])])
    assert decoded.counts[0] == 1 and decoded.counts[2] == 1 and decoded.ballot_count == 2
    svc.enqueue(make_message(pk, signer512, 1))
    svc.drain()
    assert snapshot.ballot_count == 2  # earlier snapshot unaffected
    assert svc.process_next(KEY) is Outcome.EMPTY


def test_flipped_bit_is_quarantined(keys512, signer512):
    pk, _ = keys512
    svc = service(keys512, signer512)
    msg = make_message(pk, signer512)
    bad = ContestMessage(msg.anon_id, msg.contest_id, KEY, (msg.ciphertexts[0] ^ 1,), msg.writein, msg.signature)
    svc.enqueue(bad)
    assert svc.process_next(KEY) is Outcome.REJECTED
    assert svc.get_total(KEY).ballot_count == 0
    assert svc.quarantine[0][1] == "SignatureInvalid"


def test_drain_counts(keys512, signer512):
    pk, _ = keys512
    svc = service(keys512, signer512)
    assert svc.drain() == 0
    keys = [TallyKey("president", s, "remote") for s in ("CDMX", "JAL", "MEX")]
    rng = random.Random(3)
    for _ in range(200):
        svc.enqueue(make_message(pk, signer512, rng.randrange(7), key=rng.choice(keys)))
    assert svc.drain() == 200
    assert sum(svc.get_total(k).ballot_count for k in keys) == 200
    assert svc.drain() == 0


def test_concurrent_producers_and_consumers(keys512, signer512):
    pk, sk = keys512
    svc = service(keys512, signer512)
    messages = [make_message(pk, signer512, i % 7) for i in range(60)]
    threads = [threading.Thread(target=lambda chunk=messages[i::4]: [svc.enqueue(m) for m in chunk + chunk])
               for i in range(4)]
    threads += [threading.Thread(target=svc.drain) for _ in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    drain_concurrently(svc, [KEY], 2)
    total = svc.get_total(KEY)
    assert total.ballot_count == 60
    assert decode_tally(LAYOUT, [decrypt(sk, total.encrypted_totals[0])]).ballot_count == 60


def test_crash_recovery_does_not_double_apply(tmp_path, keys512, signer512):
    pk, _ = keys512
    svc = service(keys512, signer512, tmp_path)
    msgs = [make_message(pk, signer512, i % 7) for i in range(5)]
    for m in msgs:
        svc.enqueue(m)
    svc.process_next(KEY)
    svc.process_next(KEY)
    # simulate a crash between the totals write and the "applied" log line
    qpath = tmp_path / "queues" / f"{KEY.slug}.jsonl"
    lines = qpath.read_text().splitlines()
    assert json.loads(lines[-1])["op"] == "applied"
    qpath.write_text("\n".join(lines[:-1]) + "\n")

    resumed = service(keys512, signer512, tmp_path)
    assert resumed.get_total(KEY).ballot_count == 2
    assert resumed.pending(KEY) == 3
    assert resumed.enqueue(msgs[0]) is Admission.DUPLICATE
    assert resumed.drain() == 3
    assert resumed.get_total(KEY).ballot_count == 5
    again = service(keys512, signer512, tmp_path)
    assert again.drain() == 0 and again.get_total(KEY).ballot_count == 5


def test_unsafe_table_sequential_is_correct(keys512, signer512):
    pk, _ = keys512
    table = UnsafeTotalsTable(pk)
    for i in range(5):
        table.update(make_message(pk, signer512, i))
    assert table.get_total(KEY).ballot_count == 5


@pytest.mark.parametrize("bad", ["", "x" * 5])
def test_tally_key_slug_is_filesystem_safe(bad):
    key = TallyKey(f"gov/{bad}", "CD MX", "remote")
    assert "/" not in key.slug and " " not in key.slug
