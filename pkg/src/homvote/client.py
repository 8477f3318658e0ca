"""Frontend role: encrypts selections, proves them, obtains blind signatures
and submits the ballot package over the ratcheted channel."""

from __future__ import annotations

from dataclasses import dataclass

from . import zkp
from .blindsig import VerifyKey, blind, unblind, verify_sig
from .election import (
    ERRORS,
    BallotPackage,
    BallotServer,
    Channel,
    ContestBallot,
    SessionInvalid,
    VotingError,
    handshake,
    new_ephemeral,
    public_point_bytes,
)
from .encoding import ContestSpec, Selection, build_layout, encode_selection, encode_writein
from .config import ElectionSpec
from .paillier import PaillierPublicKey, encrypt_with_randomizer
from .tally import contest_digest


class SignatureCheckFailed(VotingError):
    """The election's unblinded signature did not verify on the frontend."""


@dataclass
class PreparedContest:
    contest_id: str
    ciphertexts: tuple[int, ...]
    writein: int
    proofs: tuple[zkp.ZkProof, ...]
    digest: int
    blinded: int = 0
    mask: int = 0


def prepare_contest(
    pk: PaillierPublicKey, vk: VerifyKey, layout, selection: Selection
) -> PreparedContest:
    vector = encode_selection(layout, selection)
    ciphertexts, proofs = [], []
    for m in vector.subvectors:
        c, x = encrypt_with_randomizer(pk, m)
        ciphertexts.append(c)
        proofs.append(zkp.prove(pk, m, x, c))
    writein = encode_writein(selection.name if selection.kind == "writein" else "", pk)
    digest = contest_digest(pk, vk, ciphertexts, writein)
    blinded, mask = blind(vk, digest)
    return PreparedContest(
        layout.spec.contest_id, tuple(ciphertexts), writein, tuple(proofs), digest, blinded, mask
    )


def finish_contest(prepared: PreparedContest, blind_sig: int, vk: VerifyKey) -> ContestBallot:
    signature = unblind(blind_sig, prepared.mask, vk)
    if not verify_sig(vk, prepared.digest, signature):
        raise SignatureCheckFailed(prepared.contest_id)
    return ContestBallot(
        prepared.contest_id, prepared.ciphertexts, prepared.writein, prepared.proofs, signature
    )


class VoterClient:
    """Drives one voter through handshake, ballot retrieval, blind signing
    and submission against an in-process server."""

    def __init__(self, voter_id: str, server: BallotServer):
        self.voter_id = voter_id
        self.server = server
        self.channel: Channel | None = None
        self.ballot: dict | None = None
        self.last_frame: bytes | None = None

    def connect(self) -> None:
        ephemeral = new_ephemeral()
        server_point = self.server.open_session(self.voter_id, public_point_bytes(ephemeral))
        self.channel = Channel(handshake(self.voter_id, server_point, ephemeral))

    def close(self) -> None:
        self.server.close_session(self.voter_id)
        self.channel = None

    def _call(self, payload: dict) -> dict:
        if self.channel is None:
            raise SessionInvalid("not connected")
        frame = self.channel.seal(payload)
        self.last_frame = frame
        response = self.channel.open(self.server.handle(self.voter_id, frame))
        if not response.get("ok"):
            raise ERRORS.get(response.get("error"), VotingError)(response.get("detail", ""))
        return response

    def fetch_ballot(self) -> dict:
        self.ballot = self._call({"type": "get_ballot"})
        self.pk = PaillierPublicKey.from_dict(self.ballot["paillier"])
        self.vk = VerifyKey.from_dict(self.ballot["verify_key"])
        self.layouts = [
            build_layout(ContestSpec.from_dict(c), self.ballot["width"], self.ballot["capacity"])
            for c in self.ballot["contests"]
        ]
        return self.ballot

    def prepare(self, selections: list[Selection]) -> list[PreparedContest]:
        if self.ballot is None:
            self.fetch_ballot()
        if len(selections) != len(self.layouts):
            raise ValueError(f"ballot has {len(self.layouts)} contests")
        return [
            prepare_contest(self.pk, self.vk, layout, sel)
            for layout, sel in zip(self.layouts, selections)
        ]

    def obtain_signatures(self, prepared: list[PreparedContest]) -> BallotPackage:
        response = self._call(
            {"type": "blind_sign", "blinded": [format(p.blinded, "x") for p in prepared]}
        )
        sigs = [int(s, 16) for s in response["signatures"]]
        return BallotPackage(
            tuple(finish_contest(p, s, self.vk) for p, s in zip(prepared, sigs))
        )

    def submit(self, package: BallotPackage) -> str:
        return self._call({"type": "submit", "package": package.to_dict()})["anon_id"]

    def vote(self, selections: list[Selection]) -> str:
        """Full flow over a fresh session; the session is closed afterwards."""
        self.connect()
        try:
            self.fetch_ballot()
            package = self.obtain_signatures(self.prepare(selections))
            return self.submit(package)
        finally:
            self.close()


def default_selections(spec: ElectionSpec, state: str) -> list[Selection]:
    """First party of every contest on the state's ballot; handy in tests."""
    return [Selection.of(0) for _ in spec.ballot_style(state)]
