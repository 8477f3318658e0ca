"""On-disk layout of one election and its lifecycle phase."""

from __future__ import annotations

import json
import os
import shutil
from pathlib import Path

from .blindsig import SignatureKeypair, VerifyKey
from .config import ElectionSpec, load_spec, parse_spec
from .election import BallotServer, BallotStore, Ledger, Registry
from .paillier import PaillierPrivateKey, PaillierPublicKey
from .tally import TallyService

PHASES = ("initialized", "keys_ready", "closed", "key_reconstructed", "decrypted", "reported")


class LifecycleError(RuntimeError):
    """Command issued out of lifecycle order."""


class ElectionDir:
    def __init__(self, root: Path | str):
        self.root = Path(root)

    # paths
    spec_path = property(lambda self: self.root / "spec.json")
    registry_path = property(lambda self: self.root / "registry.csv")
    ledger_path = property(lambda self: self.root / "ledger.jsonl")
    ballots_dir = property(lambda self: self.root / "ballots")
    shards_dir = property(lambda self: self.root / "shards")
    keys_dir = property(lambda self: self.root / "keys")
    reports_dir = property(lambda self: self.root / "reports")
    decrypted_dir = property(lambda self: self.root / "decrypted")
    state_path = property(lambda self: self.root / "state.json")

    @classmethod
    def init(cls, root: Path | str, spec_text: str, force: bool = False) -> "ElectionDir":
        spec = parse_spec(spec_text)
        root = Path(root)
        if root.exists() and any(root.iterdir()):
            if not force:
                raise LifecycleError(f"{root} already exists; use --force to overwrite")
            shutil.rmtree(root)
        root.mkdir(parents=True, exist_ok=True)
        edir = cls(root)
        edir.spec_path.write_text(spec.to_json())
        for d in ("ballots", "queues", "totals", "shards", "reports", "keys", "decrypted"):
            (root / d).mkdir(exist_ok=True)
        Registry(edir.registry_path).save()
        Ledger(edir.ledger_path)
        edir._write_state({"phase": "initialized", "election_id": spec.election_id})
        return edir

    def exists(self) -> bool:
        return self.state_path.exists()

    def _write_state(self, state: dict) -> None:
        tmp = self.state_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(state, indent=2) + "\n")
        os.replace(tmp, self.state_path)

    def state(self) -> dict:
        if not self.state_path.exists():
            raise LifecycleError(f"{self.root} is not an election directory (run init)")
        return json.loads(self.state_path.read_text())

    @property
    def phase(self) -> str:
        return self.state()["phase"]

    def set_phase(self, phase: str, **extra) -> None:
        state = self.state()
        state.update(extra, phase=phase)
        self._write_state(state)

    def require(self, *phases: str, action: str) -> None:
        if self.phase not in phases:
            raise LifecycleError(
                f"cannot {action} while election is '{self.phase}' (needs {' or '.join(phases)})"
            )

    def spec(self) -> ElectionSpec:
        return load_spec(self.spec_path)

    # keys
    def public_key(self) -> PaillierPublicKey:
        return PaillierPublicKey.from_dict(self._read_key("paillier_public.json"))

    def signer(self) -> SignatureKeypair:
        return SignatureKeypair.from_dict(self._read_key("signing_key.json"))

    def verify_key(self) -> VerifyKey:
        return VerifyKey.from_dict(self._read_key("verify_key.json"))

    def _read_key(self, name: str) -> dict:
        path = self.keys_dir / name
        if not path.exists():
            raise LifecycleError(f"missing {path}; run the key ceremony first")
        return json.loads(path.read_text())

    def write_key(self, name: str, data: dict) -> Path:
        path = self.keys_dir / name
        path.write_text(json.dumps(data, indent=2) + "\n")
        return path

    def private_key(self) -> PaillierPrivateKey:
        data = self._read_key("paillier_private.json")
        return PaillierPrivateKey(self.public_key(), int(data["lam"], 16), int(data["mu"], 16))

    # stores
    def registry(self) -> Registry:
        return Registry(self.registry_path)

    def ledger(self) -> Ledger:
        return Ledger(self.ledger_path)

    def ballot_store(self) -> BallotStore:
        return BallotStore(self.ballots_dir)

    def tally(self) -> TallyService:
        return TallyService(self.public_key(), self.verify_key(), self.root)

    def server(self) -> BallotServer:
        return BallotServer(
            self.spec(), self.public_key(), self.signer(), self.registry(),
            self.ballot_store(), self.ledger(), self.tally(),
        )
