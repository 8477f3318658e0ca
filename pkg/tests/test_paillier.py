import secrets

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from homvote.paillier import (
    InvalidCiphertext,
    MessageTooLarge,
    PaillierPublicKey,
    decrypt,
    encrypt,
    hom_add,
    hom_scale,
    keygen,
    keypair_from_primes,
)

TOY_PK, TOY_SK = keypair_from_primes(5, 7)


def test_toy_key_parameters():
    assert (TOY_PK.n, TOY_PK.g, TOY_SK.lam, TOY_SK.mu) == (35, 36, 12, 3)
    assert TOY_PK.nsquare == 1225


def test_toy_encrypt_and_decrypt_fixture():
    # 36^4 * 2^35 mod 1225
    assert encrypt(TOY_PK, 4, 2) == pow(36, 4, 1225) * pow(2, 35, 1225) % 1225 == 88
    assert pow(88, 12, 1225) == 456
    assert decrypt(TOY_SK, 88) == 4


def test_zero_with_unit_randomizer_is_one():
    pk, sk = TOY_PK, TOY_SK
    assert encrypt(pk, 0, 1) == 1
    assert decrypt(sk, 1) == 0


def test_toy_roundtrip_exhaustive():
    for m in range(35):
        for x in (1, 2, 3, 4, 6, 8, 34):
            assert decrypt(TOY_SK, encrypt(TOY_PK, m, x)) == m


def test_fresh_randomizers_differ(keys512):
    pk, _ = keys512
    assert encrypt(pk, 7) != encrypt(pk, 7)


def test_plaintext_range_enforced(keys512):
    pk, _ = keys512
    with pytest.raises(MessageTooLarge):
        encrypt(pk, pk.n)
    with pytest.raises(MessageTooLarge):
        encrypt(pk, -1)


def test_decrypt_rejects_out_of_group(keys512):
    pk, sk = keys512
    for bad in (0, pk.nsquare, pk.nsquare + 5):
        with pytest.raises(InvalidCiphertext):
            decrypt(sk, bad)


def test_keygen_sizes():
    pk, sk = keygen(256)
    assert pk.n.bit_length() == 256
    assert sk.p * sk.q == pk.n


def test_hom_add():
    assert decrypt(TOY_SK, hom_add(TOY_PK, encrypt(TOY_PK, 1), encrypt(TOY_PK, 2))) == 3
    c = encrypt(TOY_PK, 9)
    assert decrypt(TOY_SK, hom_add(TOY_PK, c, encrypt(TOY_PK, 0))) == 9


def test_fold_of_ones_counts():
    total = encrypt(TOY_PK, 0, 1)
    for _ in range(10):
        total = hom_add(TOY_PK, total, encrypt(TOY_PK, 1))
    assert decrypt(TOY_SK, total) == 10


def test_hom_scale():
    assert decrypt(TOY_SK, hom_scale(TOY_PK, encrypt(TOY_PK, 4), 2)) == 8
    assert decrypt(TOY_SK, hom_scale(TOY_PK, encrypt(TOY_PK, 4), 0)) == 0
    assert decrypt(TOY_SK, hom_scale(TOY_PK, encrypt(TOY_PK, 1), -1)) == 34


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_homomorphic_sum_property(keys512, data):
    pk, sk = keys512
    values = data.draw(st.lists(st.integers(0, 2**64), min_size=1, max_size=8))
    total = encrypt(pk, 0)
    for v in values:
        total = hom_add(pk, total, encrypt(pk, v))
    assert decrypt(sk, total) == sum(values) % pk.n


def test_serialization_roundtrip(keys512):
    pk, _ = keys512
    assert PaillierPublicKey.from_dict(pk.to_dict()) == pk
    c = encrypt(pk, secrets.randbelow(pk.n))
    assert len(pk.ciphertext_bytes(c)) == pk.ciphertext_size
