"""Chaum-style RSA blind signatures over ballot digests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .mathcore import gen_prime, mod_exp, mod_inv, random_unit

DEFAULT_EXPONENT = 65537


@dataclass(frozen=True)
class VerifyKey:
    n: int
    e: int = DEFAULT_EXPONENT

    def to_dict(self) -> dict:
        return {"n": format(self.n, "x"), "e": format(self.e, "x")}

    @classmethod
    def from_dict(cls, data: dict) -> "VerifyKey":
        return cls(int(data["n"], 16), int(data["e"], 16))


@dataclass(frozen=True)
class SignatureKeypair:
    n: int
    e: int
    d: int = field(repr=False)

    @property
    def verify_key(self) -> VerifyKey:
        return VerifyKey(self.n, self.e)

    def to_dict(self) -> dict:
        return {"n": format(self.n, "x"), "e": format(self.e, "x"), "d": format(self.d, "x")}

    @classmethod
    def from_dict(cls, data: dict) -> "SignatureKeypair":
        return cls(int(data["n"], 16), int(data["e"], 16), int(data["d"], 16))


def keypair_from_primes(p: int, q: int, e: int = DEFAULT_EXPONENT) -> SignatureKeypair:
    phi = (p - 1) * (q - 1)
    return SignatureKeypair(p * q, e, mod_inv(e, phi))


def sig_keygen(bits: int = 3072, e: int = DEFAULT_EXPONENT) -> SignatureKeypair:
    if e < 3 or e % 2 == 0:
        raise ValueError("public exponent must be odd and >= 3")
    while True:
        p = gen_prime(bits // 2)
        q = gen_prime(bits // 2)
        if p == q or (p * q).bit_length() != bits:
            continue
        if math.gcd(e, (p - 1) * (q - 1)) != 1:
            continue
        return keypair_from_primes(p, q, e)


def blind(vk: VerifyKey, h: int, r: int | None = None) -> tuple[int, int]:
    """Return (blinded, mask) with blinded = h * r^e mod n."""
    if r is None:
        r = random_unit(vk.n)
    return h * mod_exp(r, vk.e, vk.n) % vk.n, r


def sign_blinded(keypair: SignatureKeypair, blinded: int) -> int:
    return mod_exp(blinded, keypair.d, keypair.n)


def sign(keypair: SignatureKeypair, h: int) -> int:
    """Direct (unblinded) signature; used by the tally's test messages and
    for checking blind signatures by value."""
    return mod_exp(h, keypair.d, keypair.n)


def unblind(B: int, mask: int, vk: VerifyKey) -> int:
    return mod_inv(mask, vk.n) * B % vk.n


def verify_sig(vk: VerifyKey, h: int, s: int) -> bool:
    if not (isinstance(s, int) and 0 <= s < vk.n):
        return False
    return mod_exp(s, vk.e, vk.n) == h % vk.n
