"""M-of-t Shamir sharing of the Paillier decryption pair.

The pair is embedded as the two lowest coefficients of the polynomial,
f(x) = lam + mu*x + a_2 x^2 + ... + a_{t-1} x^{t-1}, so reconstruction has to
recover coefficients, not just f(0).
"""

from __future__ import annotations

import json
import secrets
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

from .mathcore import is_probable_prime, mod_inv, next_prime

SHARD_FORMAT_VERSION = 1


class InvalidThreshold(ValueError):
    pass


class InsufficientShards(ValueError):
    pass


class DuplicateAbscissa(ValueError):
    pass


class InconsistentShards(ValueError):
    pass


@dataclass(frozen=True)
class ThresholdParams:
    M: int
    t: int
    prime: int

    def __post_init__(self):
        if not 2 <= self.t <= self.M:
            raise InvalidThreshold(f"need 2 <= t <= M, got t={self.t}, M={self.M}")

    @classmethod
    def for_modulus(cls, n: int, M: int = 5, t: int = 3) -> "ThresholdParams":
        """Field prime is the smallest prime above the Paillier modulus."""
        return cls(M, t, next_prime(n))

    def check_prime(self) -> bool:
        return is_probable_prime(self.prime)


@dataclass(frozen=True)
class SecretPair:
    lam: int
    mu: int


@dataclass(frozen=True)
class Shard:
    x: int
    y: int
    params: ThresholdParams

    def to_dict(self, election_id: str = "") -> dict:
        return {
            "version": SHARD_FORMAT_VERSION,
            "election_id": election_id,
            "M": self.params.M,
            "t": self.params.t,
            "prime": format(self.params.prime, "x"),
            "x": format(self.x, "x"),
            "y": format(self.y, "x"),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Shard":
        if data.get("version") != SHARD_FORMAT_VERSION:
            raise ValueError(f"unsupported shard version {data.get('version')!r}")
        params = ThresholdParams(int(data["M"]), int(data["t"]), int(data["prime"], 16))
        return cls(int(data["x"], 16), int(data["y"], 16), params)


def write_shard(path: Path, shard: Shard, election_id: str) -> None:
    Path(path).write_text(json.dumps(shard.to_dict(election_id), indent=2) + "\n")


def read_shard(path: Path) -> tuple[Shard, str]:
    data = json.loads(Path(path).read_text())
    return Shard.from_dict(data), data.get("election_id", "")


def _poly_eval(coeffs: Sequence[int], x: int, prime: int) -> int:
    y = 0
    for c in reversed(coeffs):
        y = (y * x + c) % prime
    return y


def split(
    secret: SecretPair,
    params: ThresholdParams,
    extra_coefficients: Sequence[int] | None = None,
    abscissas: Sequence[int] | None = None,
) -> list[Shard]:
    """Split into ``params.M`` shards.

    ``extra_coefficients`` (a_2 .. a_{t-1}) and ``abscissas`` default to fresh
    random draws; passing them makes the split reproducible for fixtures.
    """
    prime = params.prime
    if not (0 <= secret.lam < prime and 0 <= secret.mu < prime):
        raise ValueError("secret pair must lie in the field")
    if extra_coefficients is None:
        extra_coefficients = [secrets.randbelow(prime) for _ in range(params.t - 2)]
    if len(extra_coefficients) != params.t - 2:
        raise InvalidThreshold("need exactly t-2 extra coefficients")
    coeffs = [secret.lam, secret.mu, *extra_coefficients]

    if abscissas is None:
        xs: set[int] = set()
        while len(xs) < params.M:
            xs.add(1 + secrets.randbelow(prime - 1))
        abscissas = sorted(xs)
    if len(abscissas) != params.M or len(set(abscissas)) != params.M:
        raise DuplicateAbscissa("need M distinct abscissas")
    if any(x % prime == 0 for x in abscissas):
        raise ValueError("abscissa 0 would expose the secret directly")
    return [Shard(x, _poly_eval(coeffs, x, prime), params) for x in abscissas]


def _poly_mul_linear(poly: list[int], root: int, prime: int) -> list[int]:
    """poly(x) * (x - root)."""
    out = [0] * (len(poly) + 1)
    for i, c in enumerate(poly):
        out[i + 1] = (out[i + 1] + c) % prime
        out[i] = (out[i] - c * root) % prime
    return out


def interpolate(points: Sequence[tuple[int, int]], prime: int) -> list[int]:
    """Coefficients (lowest degree first) of the Lagrange polynomial."""
    k = len(points)
    coeffs = [0] * k
    for i, (xi, yi) in enumerate(points):
        basis = [1]
        denom = 1
        for j, (xj, _) in enumerate(points):
            if j == i:
                continue
            basis = _poly_mul_linear(basis, xj, prime)
            denom = denom * (xi - xj) % prime
        scale = yi * mod_inv(denom, prime) % prime
        for d in range(k):
            coeffs[d] = (coeffs[d] + basis[d] * scale) % prime
    return coeffs


def lagrange_eval(points: Sequence[tuple[int, int]], x: int, prime: int) -> int:
    """P(x) = sum_i y_i prod_{j != i} (x - x_j)(x_i - x_j)^-1 mod prime."""
    total = 0
    for i, (xi, yi) in enumerate(points):
        term = yi
        for j, (xj, _) in enumerate(points):
            if j != i:
                term = term * (x - xj) % prime * mod_inv((xi - xj) % prime, prime) % prime
        total = (total + term) % prime
    return total


def reconstruct(shards: Iterable[Shard], params: ThresholdParams | None = None) -> SecretPair:
    shards = list(shards)
    if not shards:
        raise InsufficientShards("no shards given")
    params = params or shards[0].params
    if len(shards) < params.t:
        raise InsufficientShards(f"need {params.t} shards, got {len(shards)}")
    if any(s.params != params for s in shards):
        raise InconsistentShards("shards come from different splits")
    xs = [s.x for s in shards]
    if len(set(xs)) != len(xs):
        raise DuplicateAbscissa("repeated shard abscissa")

    prime = params.prime
    base = [(s.x, s.y) for s in shards[: params.t]]
    coeffs = interpolate(base, prime)
    for s in shards[params.t :]:
        if _poly_eval(coeffs, s.x, prime) != s.y:
            raise InconsistentShards(f"shard at x={s.x:x} does not lie on the polynomial")
    return SecretPair(coeffs[0], coeffs[1])


def all_subsets_agree(shards: Sequence[Shard]) -> bool:
    t = shards[0].params.t
    results = {reconstruct(sub) for sub in combinations(shards, t)}
    return len(results) == 1
