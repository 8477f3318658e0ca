import base64
import hashlib
import secrets

import gmpy2
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from homvote.mathcore import (
    NotCoprime,
    challenge_hash,
    digest_concat,
    gen_prime,
    int_to_bytes,
    is_probable_prime,
    lcm,
    mod_exp,
    mod_inv,
    next_prime,
)

# Frozen from a shell pipeline (printf | base64 -d | openssl sha256 -binary |
# base64 | od) that shares no code with the package.
CHALLENGE_OF_ZERO = 114642646355261
CHALLENGE_OF_0102FF = 79590766955837


def schoolbook_pow(base, exponent, modulus):
    result, base = 1, base % modulus
    while exponent:
        if exponent & 1:
            result = result * base % modulus
        base = base * base % modulus
        exponent >>= 1
    return result


def test_mod_exp_small_cases():
    assert mod_exp(2, 10, 1000) == 24
    assert mod_exp(36, 12, 1225) == 421 == schoolbook_pow(36, 12, 1225)
    assert mod_exp(17, 0, 35) == 1


@given(st.integers(0, 2**300), st.integers(0, 2**80), st.integers(2, 2**300))
def test_mod_exp_matches_schoolbook(base, exponent, modulus):
    assert mod_exp(base, exponent, modulus) == schoolbook_pow(base, exponent, modulus)


def test_mod_exp_negative_exponent_uses_inverse():
    assert mod_exp(12, -1, 35) == 3
    assert mod_exp(2, -3, 55) * 8 % 55 == 1


def test_mod_inv():
    assert mod_inv(12, 35) == 3
    assert mod_inv(2, 55) == 28
    with pytest.raises(NotCoprime):
        mod_inv(5, 10)


def test_lcm():
    assert lcm(4, 6) == 12
    assert lcm(1, 9) == 9
    assert lcm(6, 8) == 24


def trial_division_prime(n):
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


def test_gen_prime_small_sizes():
    p8 = gen_prime(8)
    assert p8.bit_length() == 8
    assert all(p8 % q for q in (2, 3, 5, 7, 11, 13))
    p16 = gen_prime(16)
    assert p16.bit_length() == 16 and trial_division_prime(p16)
    assert gen_prime(64) != gen_prime(64)


def test_is_probable_prime_agrees_with_trial_division():
    for n in range(0, 5000):
        assert is_probable_prime(n) == trial_division_prime(n), n


def test_is_probable_prime_on_large_numbers_against_sympy():
    for _ in range(40):
        n = secrets.randbits(256) | 1
        assert is_probable_prime(n) == sympy.isprime(n)
    # Carmichael numbers and a strong pseudoprime to small bases
    for n in (561, 1105, 1729, 2465, 3215031751, 3825123056546413051):
        assert not is_probable_prime(n)
    p = gen_prime(256)
    assert gmpy2.is_prime(p) and sympy.isprime(p)


def test_next_prime():
    assert next_prime(35) == 37
    assert next_prime(96) == 97
    assert next_prime(97) == 101
    n = 2**127 - 2
    assert next_prime(n) == sympy.nextprime(n)


def test_int_to_bytes():
    assert int_to_bytes(0) == b"\x00"
    assert int_to_bytes(0x0102FF) == b"\x01\x02\xff"
    with pytest.raises(ValueError):
        int_to_bytes(-1)


def test_challenge_hash_frozen_values():
    assert challenge_hash(0) == CHALLENGE_OF_ZERO
    assert challenge_hash(0x0102FF) == CHALLENGE_OF_0102FF
    assert challenge_hash(12345) == challenge_hash(12345)


@settings(max_examples=50)
@given(st.integers(0, 2**4000))
def test_challenge_hash_below_bound(u):
    assert 0 <= challenge_hash(u) < 2**48


def test_digest_concat():
    a, b = secrets.token_bytes(40), secrets.token_bytes(40)
    m = 2**255 + 95
    assert digest_concat(a, b, m) == digest_concat(a, b, m)
    assert digest_concat(a, b, m) != digest_concat(b, a, m)
    expected = int.from_bytes(hashlib.sha256(a + b).digest(), "big") % m
    assert digest_concat(a, b, m) == expected
    assert digest_concat(a, b, 1000) < 1000


def test_challenge_pipeline_matches_fixture_recipe():
    # the recipe written out by hand for a single value
    encoded = base64.b64encode(b"\x00")
    assert encoded == b"AA=="
    digest = base64.b64encode(hashlib.sha256(encoded).digest())
    assert int.from_bytes(digest, "big") % 2**48 == CHALLENGE_OF_ZERO
