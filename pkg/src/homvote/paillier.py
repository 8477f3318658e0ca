"""Paillier cryptosystem with g = n + 1.

Ciphertexts and plaintexts are plain Python integers; the keys carry the
modulus arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .mathcore import gen_prime, lcm, mod_exp, mod_inv, random_unit

PRODUCTION_BITS = 3072
TEST_BITS = 512


class MessageTooLarge(ValueError):
    pass


class InvalidCiphertext(ValueError):
    pass


@dataclass(frozen=True)
class PaillierPublicKey:
    n: int
    bits: int = 0
    nsquare: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nsquare", self.n * self.n)
        if not self.bits:
            object.__setattr__(self, "bits", self.n.bit_length())

    @property
    def g(self) -> int:
        return self.n + 1

    @property
    def ciphertext_size(self) -> int:
        """Fixed byte width of a ciphertext (residue mod n^2)."""
        return (self.nsquare.bit_length() + 7) // 8

    def ciphertext_bytes(self, c: int) -> bytes:
        return c.to_bytes(self.ciphertext_size, "big")

    def is_valid_ciphertext(self, c: int) -> bool:
        return isinstance(c, int) and 0 < c < self.nsquare and math.gcd(c, self.n) == 1

    def to_dict(self) -> dict:
        return {"n": format(self.n, "x"), "bits": self.bits}

    @classmethod
    def from_dict(cls, data: dict) -> "PaillierPublicKey":
        return cls(int(data["n"], 16), int(data.get("bits", 0)))


@dataclass(frozen=True)
class PaillierPrivateKey:
    """Decryption pair (lambda, mu). The primes are optional: a key rebuilt
    from threshold shards only knows (lam, mu)."""

    public: PaillierPublicKey
    lam: int
    mu: int
    p: int | None = field(default=None, repr=False)
    q: int | None = field(default=None, repr=False)


def _L(u: int, n: int) -> int:
    return (u - 1) // n


def keypair_from_primes(p: int, q: int) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
    if p == q:
        raise ValueError("p and q must be distinct")
    n = p * q
    pk = PaillierPublicKey(n)
    lam = lcm(p - 1, q - 1)
    mu = mod_inv(_L(mod_exp(pk.g, lam, pk.nsquare), n), n)
    return pk, PaillierPrivateKey(pk, lam, mu, p, q)


def keygen(bits: int = PRODUCTION_BITS) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
    if bits < 16 or bits % 2:
        raise ValueError("bits must be an even integer >= 16")
    while True:
        p = gen_prime(bits // 2)
        q = gen_prime(bits // 2)
        if p == q or (p * q).bit_length() != bits:
            continue
        # gcd(n, phi) = 1 holds for equal-size primes; checked anyway
        if math.gcd(p * q, (p - 1) * (q - 1)) != 1:
            continue
        return keypair_from_primes(p, q)


def encrypt(pk: PaillierPublicKey, m: int, x: int | None = None) -> int:
    if not 0 <= m < pk.n:
        raise MessageTooLarge(f"plaintext must lie in [0, n), got {m.bit_length()} bits")
    if x is None:
        x = random_unit(pk.n)
    # g^m = 1 + m*n (mod n^2) when g = n + 1
    gm = (1 + m * pk.n) % pk.nsquare
    return gm * mod_exp(x, pk.n, pk.nsquare) % pk.nsquare


def encrypt_with_randomizer(pk: PaillierPublicKey, m: int) -> tuple[int, int]:
    """Encrypt and also return the randomizer, which the prover needs."""
    x = random_unit(pk.n)
    return encrypt(pk, m, x), x


def decrypt(sk: PaillierPrivateKey, c: int) -> int:
    pk = sk.public
    if not pk.is_valid_ciphertext(c):
        raise InvalidCiphertext("ciphertext outside Z_{n^2}^*")
    return _L(mod_exp(c, sk.lam, pk.nsquare), pk.n) * sk.mu % pk.n


def hom_add(pk: PaillierPublicKey, c1: int, c2: int) -> int:
    return c1 * c2 % pk.nsquare


def hom_scale(pk: PaillierPublicKey, c: int, k: int) -> int:
    """c^k mod n^2, i.e. an encryption of k*m. Negative k uses the inverse."""
    return mod_exp(c, k, pk.nsquare)
