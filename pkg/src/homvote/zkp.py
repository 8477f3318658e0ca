"""Non-interactive proof of knowledge of the plaintext and randomizer behind a
Paillier ciphertext (Fiat-Shamir over a Guillou-Quisquater style commitment).
"""

from __future__ import annotations

import math
import secrets
from dataclasses import dataclass

from .mathcore import CHALLENGE_BITS, challenge_hash, mod_exp, mod_inv, random_unit
from .paillier import PaillierPublicKey

PRODUCTION_MESSAGE_BITS = 3001
# 48-bit challenge plus the slack between 3072 and 3001
MESSAGE_BIT_MARGIN = 71


class MessageTooLong(ValueError):
    pass


@dataclass(frozen=True)
class ZkProof:
    u: int
    e: int
    v: int
    w: int

    def to_dict(self) -> dict:
        return {k: format(getattr(self, k), "x") for k in ("u", "e", "v", "w")}

    @classmethod
    def from_dict(cls, data: dict) -> "ZkProof":
        return cls(*(int(data[k], 16) for k in ("u", "e", "v", "w")))


def message_bit_bound(pk: PaillierPublicKey) -> int:
    """Longest plaintext (in bits) the prover accepts for this key size."""
    if pk.n.bit_length() >= 3072:
        return PRODUCTION_MESSAGE_BITS
    return max(pk.n.bit_length() - MESSAGE_BIT_MARGIN, 0)


def commit(pk: PaillierPublicKey, r: int, s: int) -> int:
    return (1 + r * pk.n) % pk.nsquare * mod_exp(s, pk.n, pk.nsquare) % pk.nsquare


def respond(pk: PaillierPublicKey, m: int, x: int, r: int, s: int, e: int) -> tuple[int, int]:
    """Response pair (v, w) = (r - e*m, s * x^-e mod n)."""
    v = r - e * m
    w = s * mod_exp(mod_inv(x, pk.n), e, pk.n) % pk.n
    return v, w


def prove(pk: PaillierPublicKey, m: int, x: int, c: int | None = None) -> ZkProof:
    if m < 0 or m.bit_length() > message_bit_bound(pk):
        raise MessageTooLong(
            f"message of {m.bit_length()} bits exceeds bound {message_bit_bound(pk)}"
        )
    while True:
        r = secrets.randbelow(pk.n)
        s = random_unit(pk.n)
        u = commit(pk, r, s)
        e = challenge_hash(u)
        if r > e * m:
            break
        # r <= e*m would leave v outside (0, n); redraw both nonces
    v, w = respond(pk, m, x, r, s, e)
    return ZkProof(u, e, v, w)


def verify(pk: PaillierPublicKey, c: int, proof: ZkProof) -> bool:
    n, n2 = pk.n, pk.nsquare
    try:
        u, e, v, w = proof.u, proof.e, proof.v, proof.w
        if not (0 < c < n2 and math.gcd(c, n) == 1):
            return False
        if not (0 < u < n2 and math.gcd(u, n) == 1):
            return False
        if not (0 <= e < 1 << CHALLENGE_BITS and 0 < v < n and 0 < w < n):
            return False
        if math.gcd(w, n) != 1:
            return False
        if challenge_hash(u) != e:
            return False
        rhs = (1 + v * n) % n2 * mod_exp(c, e, n2) % n2 * mod_exp(w, n, n2) % n2
        return rhs == u
    except (TypeError, AttributeError):
        return False
