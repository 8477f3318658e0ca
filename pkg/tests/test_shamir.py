from itertools import combinations

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from homvote import shamir
from homvote.shamir import SecretPair, Shard, ThresholdParams

TOY = ThresholdParams(5, 3, 97)


def test_toy_split_evaluations():
    shards = shamir.split(SecretPair(13, 7), TOY, extra_coefficients=[5], abscissas=[1, 2, 3, 4, 5])
    assert [(s.x, s.y) for s in shards[:3]] == [(1, 25), (2, 47), (3, 79)]


def test_toy_reconstruct_matches_linear_solve():
    points = [(1, 25), (2, 47), (3, 79)]
    # independent oracle: solve the Vandermonde system over F_97
    vander = sympy.Matrix([[1, x, x * x] for x, _ in points])
    rhs = sympy.Matrix([y for _, y in points])
    solution = (vander.inv_mod(97) * rhs).applyfunc(lambda v: v % 97)
    assert list(solution) == [13, 7, 5]

    shards = [Shard(x, y, TOY) for x, y in points]
    assert shamir.reconstruct(shards) == SecretPair(13, 7)
    assert shamir.lagrange_eval(points, 0, 97) == 13


def test_linear_case_without_random_coefficients():
    params = ThresholdParams(2, 2, 97)
    shards = shamir.split(SecretPair(13, 7), params, abscissas=[4, 9])
    assert [s.y for s in shards] == [(13 + 7 * 4) % 97, (13 + 7 * 9) % 97]


def test_all_triples_agree(keys512):
    _, sk = keys512
    params = ThresholdParams.for_modulus(sk.public.n)
    shards = shamir.split(SecretPair(sk.lam, sk.mu), params)
    assert len(shards) == 5 and params.t == 3
    results = {shamir.reconstruct(c) for c in combinations(shards, 3)}
    assert results == {SecretPair(sk.lam, sk.mu)}
    assert shamir.all_subsets_agree(shards)
    # a fourth shard is checked against the polynomial
    assert shamir.reconstruct(shards[:4]) == SecretPair(sk.lam, sk.mu)


def test_too_few_shards_refused():
    shards = shamir.split(SecretPair(1, 2), TOY)
    for k in range(3):
        with pytest.raises(shamir.InsufficientShards):
            shamir.reconstruct(shards[:k])


def test_bad_shard_sets():
    shards = shamir.split(SecretPair(1, 2), TOY)
    with pytest.raises(shamir.DuplicateAbscissa):
        shamir.reconstruct([shards[0], shards[0], shards[1]])
    forged = Shard(shards[3].x, (shards[3].y + 1) % 97, TOY)
    with pytest.raises(shamir.InconsistentShards):
        shamir.reconstruct(shards[:3] + [forged])
    other = Shard(shards[2].x, shards[2].y, ThresholdParams(5, 3, 101))
    with pytest.raises(shamir.InconsistentShards):
        shamir.reconstruct(shards[:2] + [other])


def test_threshold_validation():
    for M, t in ((5, 6), (5, 1), (1, 1)):
        with pytest.raises(shamir.InvalidThreshold):
            ThresholdParams(M, t, 97)


def test_field_prime_exceeds_modulus(keys512):
    pk, _ = keys512
    params = ThresholdParams.for_modulus(pk.n)
    assert params.prime > pk.n and sympy.isprime(params.prime)


def test_shard_file_roundtrip(tmp_path):
    shard = shamir.split(SecretPair(13, 7), TOY)[0]
    path = tmp_path / "shard.json"
    shamir.write_shard(path, shard, "demo")
    assert shamir.read_shard(path) == (shard, "demo")


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7).flatmap(lambda M: st.tuples(st.just(M), st.integers(2, M))), st.data())
def test_any_threshold_subset_recovers(mt, data):
    M, t = mt
    prime = 2**127 - 1
    params = ThresholdParams(M, t, prime)
    secret = SecretPair(data.draw(st.integers(0, prime - 1)), data.draw(st.integers(0, prime - 1)))
    shards = shamir.split(secret, params)
    subset = data.draw(st.permutations(shards))[:t]
    assert shamir.reconstruct(subset) == secret
