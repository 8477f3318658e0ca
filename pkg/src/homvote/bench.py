"""Submission-pipeline timing: serial versus per-contest parallel verification.

Each timed ballot runs, for every contest: blind signing of the blinded
digest, unblinding, signature verification, proof verification and the
homomorphic update of a running total. Serial mode walks the contests in
order; parallel mode hands each contest to its own worker process.
"""

from __future__ import annotations

import os
import platform
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from . import zkp
from .blindsig import SignatureKeypair, VerifyKey, sig_keygen, sign_blinded, unblind, verify_sig
from .client import prepare_contest
from .config import fixture_spec
from .encoding import Selection
from .paillier import PaillierPublicKey, hom_add, keygen

MODES = ("serial", "parallel")


@dataclass(frozen=True)
class ContestWork:
    ciphertext: int
    proof: zkp.ZkProof
    digest: int
    blinded: int
    mask: int


@dataclass
class CellStats:
    mode: str
    contests: int
    samples: list[float]

    @property
    def mean(self) -> float:
        return statistics.fmean(self.samples)

    @property
    def minimum(self) -> float:
        return min(self.samples)

    @property
    def maximum(self) -> float:
        return max(self.samples)


@dataclass
class BenchResult:
    bits: int
    ballots: int
    warmup: int
    workers: int
    cells: dict[tuple[str, int], CellStats] = field(default_factory=dict)

    def means(self, mode: str, contests) -> list[float]:
        return [self.cells[(mode, c)].mean for c in contests]

    def slope(self, mode: str, contests) -> float:
        contests = list(contests)
        return statistics.linear_regression(contests, self.means(mode, contests)).slope

    def spread(self, mode: str, contests) -> float:
        """(max - min) of the cell means relative to their average."""
        means = self.means(mode, contests)
        return (max(means) - min(means)) / statistics.fmean(means)

    def table(self) -> str:
        lines = [
            f"# profile: {self.bits}-bit keys, {self.ballots} ballots/cell, "
            f"{self.warmup} warm-up, {self.workers} workers, {os.cpu_count()} cpus, "
            f"python {platform.python_version()}",
            f"{'mode':<9}{'contests':>9}{'min ms':>10}{'max ms':>10}{'mean ms':>10}",
        ]
        for (mode, c), cell in sorted(self.cells.items()):
            lines.append(
                f"{mode:<9}{c:>9}{cell.minimum * 1e3:>10.2f}"
                f"{cell.maximum * 1e3:>10.2f}{cell.mean * 1e3:>10.2f}"
            )
        modes = {m for m, _ in self.cells}
        counts = sorted({c for _, c in self.cells})
        if "serial" in modes and len(counts) > 1:
            lines.append(f"serial slope: {self.slope('serial', counts) * 1e3:.3f} ms/contest")
        multi = [c for c in counts if c >= 2]
        if "parallel" in modes and len(multi) > 1:
            lines.append(f"parallel spread (2+ contests): {self.spread('parallel', multi):.1%}")
        return "\n".join(lines)


_ctx: dict = {}


def _init(n: int, sig_n: int, sig_e: int, sig_d: int) -> None:
    _ctx["pk"] = PaillierPublicKey(n)
    _ctx["signer"] = SignatureKeypair(sig_n, sig_e, sig_d)


def _verify_contest(work: ContestWork) -> int:
    pk: PaillierPublicKey = _ctx["pk"]
    signer: SignatureKeypair = _ctx["signer"]
    vk: VerifyKey = signer.verify_key
    signature = unblind(sign_blinded(signer, work.blinded), work.mask, vk)
    if not verify_sig(vk, work.digest, signature):
        raise ValueError("signature rejected")
    if not zkp.verify(pk, work.ciphertext, work.proof):
        raise ValueError("proof rejected")
    return work.ciphertext


def make_work(pk: PaillierPublicKey, signer: SignatureKeypair, count: int) -> list[ContestWork]:
    layout = fixture_spec("presidential").layout("president")
    out = []
    for i in range(count):
        prepared = prepare_contest(pk, signer.verify_key, layout, Selection.of(i % 7))
        out.append(
            ContestWork(
                prepared.ciphertexts[0], prepared.proofs[0], prepared.digest,
                prepared.blinded, prepared.mask,
            )
        )
    return out


def run_bench(
    contests=range(1, 6),
    modes=MODES,
    ballots: int = 100,
    bits: int = 1024,
    warmup: int = 10,
    workers: int | None = None,
    keys: tuple[PaillierPublicKey, SignatureKeypair] | None = None,
) -> BenchResult:
    contests = list(contests)
    workers = workers or max(contests)
    if keys is None:
        pk, _ = keygen(bits)
        signer = sig_keygen(bits)
    else:
        pk, signer = keys
    work = make_work(pk, signer, max(contests) * 2)
    _init(pk.n, signer.n, signer.e, signer.d)
    result = BenchResult(pk.bits, ballots, warmup, workers)

    pool = None
    if "parallel" in modes:
        pool = ProcessPoolExecutor(
            workers, initializer=_init, initargs=(pk.n, signer.n, signer.e, signer.d)
        )
    try:
        for mode in modes:
            for c in contests:
                samples = []
                total = None
                for i in range(warmup + ballots):
                    items = [work[(i + j) % len(work)] for j in range(c)]
                    t0 = time.perf_counter()
                    if mode == "serial":
                        verified = [_verify_contest(w) for w in items]
                    else:
                        verified = list(pool.map(_verify_contest, items))
                    for ct in verified:
                        total = ct if total is None else hom_add(pk, total, ct)
                    elapsed = time.perf_counter() - t0
                    if i >= warmup:
                        samples.append(elapsed)
                result.cells[(mode, c)] = CellStats(mode, c, samples)
    finally:
        if pool is not None:
            pool.shutdown()
    return result
