"""Modular arithmetic, prime generation and the hash pipelines shared by the
cryptographic modules."""

from __future__ import annotations

import base64
import hashlib
import math
import secrets

import gmpy2

CHALLENGE_BITS = 48
MILLER_RABIN_ROUNDS = 64

_SMALL_PRIMES = [p for p in range(3, 2000) if all(p % d for d in range(2, int(p**0.5) + 1))]


class NotCoprime(ValueError):
    """Raised when a modular inverse does not exist."""


def mod_exp(base: int, exponent: int, modulus: int) -> int:
    if modulus < 2:
        raise ValueError("modulus must be at least 2")
    if exponent < 0:
        return int(gmpy2.powmod(mod_inv(base, modulus), -exponent, modulus))
    return int(gmpy2.powmod(base, exponent, modulus))


def mod_inv(a: int, m: int) -> int:
    if m < 2:
        raise ValueError("modulus must be at least 2")
    if math.gcd(a, m) != 1:
        raise NotCoprime(f"gcd({a}, {m}) != 1")
    return pow(a, -1, m)


def lcm(a: int, b: int) -> int:
    return a // math.gcd(a, b) * b


def is_probable_prime(n: int, rounds: int = MILLER_RABIN_ROUNDS) -> bool:
    """Miller-Rabin with random bases drawn from a CSPRNG."""
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = 2 + secrets.randbelow(n - 3)
        x = int(gmpy2.powmod(a, d, n))
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def gen_prime(bits: int) -> int:
    """Random probable prime with exactly ``bits`` bits (top bit set)."""
    if bits < 8:
        raise ValueError("bits must be >= 8")
    while True:
        candidate = secrets.randbits(bits) | (1 << (bits - 1)) | 1
        # one cheap round rejects almost every composite before the full test
        if is_probable_prime(candidate, rounds=1) and is_probable_prime(candidate):
            return candidate


def next_prime(n: int) -> int:
    """Smallest probable prime strictly greater than ``n``."""
    candidate = n + 1
    if candidate <= 2:
        return 2
    if candidate % 2 == 0:
        candidate += 1
    while not is_probable_prime(candidate):
        candidate += 2
    return candidate


def int_to_bytes(value: int) -> bytes:
    """Minimal big-endian encoding; zero is the single byte 0x00."""
    if value < 0:
        raise ValueError("negative integers have no canonical encoding")
    return value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")


def challenge_hash(u: int) -> int:
    # bytes -> base64 -> SHA-256 -> base64 -> ASCII as big-endian int -> mod 2^48
    encoded = base64.b64encode(int_to_bytes(u))
    digest_b64 = base64.b64encode(hashlib.sha256(encoded).digest())
    return int.from_bytes(digest_b64, "big") % (1 << CHALLENGE_BITS)


def digest_concat(first: bytes, second: bytes, modulus: int) -> int:
    if modulus < 2:
        raise ValueError("modulus must be at least 2")
    digest = hashlib.sha256(first + second).digest()
    return int.from_bytes(digest, "big") % modulus


def random_unit(n: int) -> int:
    """Uniform draw from Z_n^*."""
    while True:
        x = 1 + secrets.randbelow(n - 1)
        if math.gcd(x, n) == 1:
            return x
