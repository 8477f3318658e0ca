"""Election description loaded from ``spec.json``."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .encoding import (
    DEFAULT_CAPACITY,
    DEFAULT_WIDTH,
    ContestLayout,
    ContestSpec,
    InvalidSpec,
    build_layout,
)
from .tally import MODALITIES
from .zkp import MESSAGE_BIT_MARGIN, PRODUCTION_MESSAGE_BITS

MAX_CONTESTS_PER_BALLOT = 4


class SpecError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class ContestEntry:
    spec: ContestSpec
    states: tuple[str, ...]


@dataclass(frozen=True)
class ElectionSpec:
    election_id: str
    states: tuple[str, ...]
    modalities: tuple[str, ...]
    contests: tuple[ContestEntry, ...]
    key_bits: int = 3072
    signing_bits: int = 0
    width: int = DEFAULT_WIDTH
    capacity: int = DEFAULT_CAPACITY
    _layouts: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    @property
    def sig_bits(self) -> int:
        return self.signing_bits or self.key_bits

    def layout(self, contest_id: str) -> ContestLayout:
        if contest_id not in self._layouts:
            entry = self.contest(contest_id)
            self._layouts[contest_id] = build_layout(entry.spec, self.width, self.capacity)
        return self._layouts[contest_id]

    def contest(self, contest_id: str) -> ContestEntry:
        for entry in self.contests:
            if entry.spec.contest_id == contest_id:
                return entry
        raise KeyError(contest_id)

    def ballot_style(self, state: str) -> tuple[str, ...]:
        return tuple(e.spec.contest_id for e in self.contests if state in e.states)

    def to_dict(self) -> dict:
        return {
            "election_id": self.election_id,
            "states": list(self.states),
            "modalities": list(self.modalities),
            "key_bits": self.key_bits,
            "signing_bits": self.signing_bits,
            "width": self.width,
            "capacity": self.capacity,
            "contests": [contest_to_dict(e.spec, e.states) for e in self.contests],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def contest_to_dict(spec: ContestSpec, states=None) -> dict:
    out = {
        "contest_id": spec.contest_id,
        "parties": list(spec.parties),
        "coalitions": [[spec.parties[i] for i in c] for c in spec.coalitions],
        "allow_writein": spec.allow_writein,
        "allow_novote": spec.allow_novote,
    }
    if states is not None:
        out["states"] = list(states)
    return out


def _line_of(text: str, needle: str) -> int | None:
    for number, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return number
    return None


def parse_spec(text: str) -> ElectionSpec:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(exc.msg, exc.lineno) from None

    def fail(message: str, needle: str | None = None):
        raise SpecError(message, _line_of(text, needle) if needle else None)

    for key in ("election_id", "states", "contests"):
        if key not in data:
            fail(f"missing required field {key!r}")
    states = tuple(data["states"])
    if not states or len(set(states)) != len(states):
        fail("states must be a non-empty list of distinct names", '"states"')
    modalities = tuple(data.get("modalities", MODALITIES))
    for m in modalities:
        if m not in MODALITIES:
            fail(f"unknown modality {m!r}", f'"{m}"')

    contests = []
    seen = set()
    for raw in data["contests"]:
        cid = raw.get("contest_id")
        if not cid:
            fail("contest without contest_id", '"contests"')
        if cid in seen:
            fail(f"duplicate contest {cid!r}", f'"{cid}"')
        seen.add(cid)
        try:
            spec = ContestSpec.from_dict(raw)
        except InvalidSpec as exc:
            fail(str(exc), f'"{cid}"')
        applies = raw.get("states", ["*"])
        if applies == ["*"] or applies == "*":
            applies = list(states)
        unknown = [s for s in applies if s not in states]
        if unknown:
            fail(f"{cid}: unknown states {unknown}", f'"{cid}"')
        contests.append(ContestEntry(spec, tuple(applies)))

    spec = ElectionSpec(
        election_id=str(data["election_id"]),
        states=states,
        modalities=modalities,
        contests=tuple(contests),
        key_bits=int(data.get("key_bits", 3072)),
        signing_bits=int(data.get("signing_bits", 0)),
        width=int(data.get("width", DEFAULT_WIDTH)),
        capacity=int(data.get("capacity", DEFAULT_CAPACITY)),
    )
    if spec.key_bits < 128 or spec.key_bits % 2:
        fail("key_bits must be an even number >= 128", '"key_bits"')
    for state in states:
        style = spec.ballot_style(state)
        if not 1 <= len(style) <= MAX_CONTESTS_PER_BALLOT:
            fail(f"state {state!r} has {len(style)} contests (allowed 1-4)", f'"{state}"')
    bound = (
        PRODUCTION_MESSAGE_BITS
        if spec.key_bits >= 3072
        else spec.key_bits - MESSAGE_BIT_MARGIN
    )
    for entry in spec.contests:
        layout = spec.layout(entry.spec.contest_id)
        for sv in range(layout.subvector_count):
            bits = layout.subvector_bits(sv)
            # a single ballot sets at most bit (bits - width); totals need all bits
            if bits - layout.width + 1 > bound or bits >= spec.key_bits:
                fail(
                    f"{entry.spec.contest_id}: sub-vector of {bits} bits does not fit "
                    f"{spec.key_bits}-bit keys; lower capacity or raise key_bits",
                    f'"{entry.spec.contest_id}"',
                )
    return spec


def load_spec(path: Path | str) -> ElectionSpec:
    return parse_spec(Path(path).read_text())


def fixture_text(name: str) -> str:
    """Bundled example election specs (``presidential``, ``mexico_small``, ``chiapas``)."""
    return resources.files("homvote.data").joinpath(f"{name}.json").read_text()


def fixture_spec(name: str) -> ElectionSpec:
    return parse_spec(fixture_text(name))
