"""Coalition-aware ballot encoding.

A contest's possible selections become fixed-width bit fields of one or more
integers ("sub-vectors"). Single-party selections come first in ballot order,
then write-in and no-vote, then each coalition's multi-party combinations at
their binary slot numbers. Each sub-vector carries a trailing count field set
to 1, so that the homomorphic sum also counts ballots.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from typing import Sequence

from .paillier import PaillierPublicKey, encrypt
from .zkp import message_bit_bound

DEFAULT_WIDTH = 20
DEFAULT_CAPACITY = 150


class InvalidSpec(ValueError):
    pass


class InvalidSelection(ValueError):
    pass


class SingletonSubset(ValueError):
    pass


class CountMismatch(ValueError):
    pass


class OverflowSuspected(ValueError):
    pass


class NameTooLong(ValueError):
    pass


@dataclass(frozen=True)
class ContestSpec:
    contest_id: str
    parties: tuple[str, ...]
    coalitions: tuple[tuple[int, ...], ...] = ()
    allow_writein: bool = True
    allow_novote: bool = True

    def __post_init__(self):
        object.__setattr__(self, "parties", tuple(self.parties))
        seen: set[int] = set()
        normalized = []
        for coalition in self.coalitions:
            members = tuple(sorted(coalition))
            if len(members) < 2:
                raise InvalidSpec(f"{self.contest_id}: coalitions need at least two parties")
            for idx in members:
                if not 0 <= idx < len(self.parties):
                    raise InvalidSpec(f"{self.contest_id}: party index {idx} out of range")
                if idx in seen:
                    raise InvalidSpec(
                        f"{self.contest_id}: party {self.parties[idx]!r} is in two coalitions"
                    )
                seen.add(idx)
            normalized.append(members)
        if len(set(self.parties)) != len(self.parties):
            raise InvalidSpec(f"{self.contest_id}: duplicate party names")
        object.__setattr__(self, "coalitions", tuple(normalized))

    @property
    def standalone(self) -> tuple[int, ...]:
        grouped = {i for c in self.coalitions for i in c}
        return tuple(i for i in range(len(self.parties)) if i not in grouped)

    def coalition_of(self, party: int) -> int | None:
        for ci, members in enumerate(self.coalitions):
            if party in members:
                return ci
        return None

    @classmethod
    def from_dict(cls, data: dict) -> "ContestSpec":
        parties = list(data["parties"])
        index = {name: i for i, name in enumerate(parties)}
        coalitions = []
        for group in data.get("coalitions", []):
            try:
                coalitions.append(tuple(index[name] for name in group))
            except KeyError as exc:
                raise InvalidSpec(f"{data['contest_id']}: unknown party {exc.args[0]!r}") from None
        return cls(
            data["contest_id"],
            tuple(parties),
            tuple(coalitions),
            bool(data.get("allow_writein", True)),
            bool(data.get("allow_novote", True)),
        )


@dataclass(frozen=True)
class Component:
    kind: str  # party | writein | novote | coalition
    label: str
    party: int | None = None
    coalition: int | None = None
    slot: int | None = None
    members: tuple[int, ...] | None = None  # None marks an unused coalition slot


@dataclass(frozen=True)
class ContestLayout:
    spec: ContestSpec
    components: tuple[Component, ...]
    width: int
    capacity: int
    # [start, stop) component ranges, one per sub-vector
    ranges: tuple[tuple[int, int], ...]
    _index: dict = field(repr=False, compare=False, hash=False, default_factory=dict)

    @property
    def subvector_count(self) -> int:
        return len(self.ranges)

    def locate(self, component: int) -> tuple[int, int]:
        """(sub-vector, local position) of a component."""
        for sv, (start, stop) in enumerate(self.ranges):
            if start <= component < stop:
                return sv, component - start
        raise IndexError(component)

    def subvector_bits(self, sv: int) -> int:
        """Bit length of a sub-vector including its count field."""
        start, stop = self.ranges[sv]
        return self.width * (stop - start + 1)

    def component_for(self, selection: "Selection") -> int:
        violations = validate_selection(self.spec, selection)
        if violations:
            raise InvalidSelection("; ".join(violations))
        if selection.kind == "writein":
            return self._index["writein"]
        if selection.kind == "novote":
            return self._index["novote"]
        if len(selection.parties) == 1:
            (party,) = selection.parties
            return self._index[("party", party)]
        ci = self.spec.coalition_of(next(iter(selection.parties)))
        members = self.spec.coalitions[ci]
        slot = coalition_slot({members.index(p) for p in selection.parties})
        return self._index[("coalition", ci)] + slot - 1


@dataclass(frozen=True)
class Selection:
    kind: str  # parties | writein | novote
    parties: frozenset[int] = frozenset()
    name: str = ""

    @classmethod
    def of(cls, *parties: int) -> "Selection":
        return cls("parties", frozenset(parties))

    @classmethod
    def writein(cls, name: str) -> "Selection":
        return cls("writein", name=name)

    @classmethod
    def novote(cls) -> "Selection":
        return cls("novote")


@dataclass(frozen=True)
class ChoiceVector:
    subvectors: tuple[int, ...]


@dataclass(frozen=True)
class TallyVector:
    counts: tuple[int, ...]
    ballot_count: int


def coalition_slot(member_indices) -> int:
    """Slot number of a multi-party subset: sum(2^i) - 2."""
    members = set(member_indices)
    if len(members) < 2:
        raise SingletonSubset("single-party selections use single-party components")
    return sum(1 << i for i in members) - 2


def component_count(spec: ContestSpec) -> int:
    return (
        len(spec.parties)
        + spec.allow_writein
        + spec.allow_novote
        + sum((1 << len(c)) - 3 for c in spec.coalitions)
    )


def build_layout(
    spec: ContestSpec, width: int = DEFAULT_WIDTH, capacity: int = DEFAULT_CAPACITY
) -> ContestLayout:
    components: list[Component] = []
    index: dict = {}
    for p, name in enumerate(spec.parties):
        index[("party", p)] = len(components)
        components.append(Component("party", name, party=p))
    if spec.allow_writein:
        index["writein"] = len(components)
        components.append(Component("writein", "write-in"))
    if spec.allow_novote:
        index["novote"] = len(components)
        components.append(Component("novote", "no vote"))

    for ci, members in enumerate(spec.coalitions):
        k = len(members)
        index[("coalition", ci)] = len(components)
        for slot in range(1, (1 << k) - 2):
            mask = slot + 2
            positions = tuple(i for i in range(k) if mask >> i & 1)
            if len(positions) < 2:
                # singleton {p_i}, i >= 2, maps here; the slot stays reserved
                components.append(Component("coalition", f"(unused slot {slot})", coalition=ci, slot=slot))
                continue
            party_ids = tuple(members[i] for i in positions)
            label = "+".join(spec.parties[p] for p in party_ids)
            components.append(
                Component("coalition", label, coalition=ci, slot=slot, members=party_ids)
            )

    ranges = tuple(
        (start, min(start + capacity, len(components)))
        for start in range(0, len(components), capacity)
    ) or ((0, 0),)
    return ContestLayout(spec, tuple(components), width, capacity, ranges, index)


def validate_selection(spec: ContestSpec, selection: Selection) -> list[str]:
    """Return a list of rule violations; empty means the selection is valid."""
    problems = []
    if selection.kind == "writein":
        if not spec.allow_writein:
            problems.append("write-ins are not allowed in this contest")
        if not selection.name.strip():
            problems.append("write-in name is empty")
        return problems
    if selection.kind == "novote":
        if not spec.allow_novote:
            problems.append("no-vote is not offered in this contest")
        return problems
    if selection.kind != "parties":
        return [f"unknown selection kind {selection.kind!r}"]

    parties = selection.parties
    if not parties:
        return ["at least one option must be selected"]
    bad = [p for p in parties if not 0 <= p < len(spec.parties)]
    if bad:
        return [f"unknown party index {p}" for p in sorted(bad)]
    if len(parties) == 1:
        return problems

    standalone = set(spec.standalone) & parties
    if standalone:
        names = ", ".join(spec.parties[p] for p in sorted(standalone))
        problems.append(f"{names} cannot be combined with other selections")
    groups = {spec.coalition_of(p) for p in parties} - {None}
    if len(groups) > 1:
        names = ", ".join(spec.parties[p] for p in sorted(parties))
        problems.append(f"{names} span different coalitions")
    return problems


def encode_selection(layout: ContestLayout, selection: Selection) -> ChoiceVector:
    chosen = layout.component_for(selection)
    target_sv, local = layout.locate(chosen)
    out = []
    for sv, (start, stop) in enumerate(layout.ranges):
        value = 1 << (layout.width * (stop - start))
        if sv == target_sv:
            value |= 1 << (layout.width * local)
        out.append(value)
    return ChoiceVector(tuple(out))


def add_vectors(vectors: Sequence[ChoiceVector]) -> list[int]:
    """Plain integer sum per sub-vector; mirrors what the homomorphic tally computes."""
    if not vectors:
        return []
    return [sum(parts) for parts in zip(*(v.subvectors for v in vectors))]


def decode_tally(layout: ContestLayout, sums: Sequence[int]) -> TallyVector:
    if len(sums) != layout.subvector_count:
        raise ValueError(f"expected {layout.subvector_count} sub-vector sums, got {len(sums)}")
    mask = (1 << layout.width) - 1
    counts: list[int] = []
    ballot_counts = []
    for (start, stop), total in zip(layout.ranges, sums):
        size = stop - start
        if total >> (layout.width * (size + 1)):
            raise OverflowSuspected("bits set above the count field")
        fields = [(total >> (layout.width * i)) & mask for i in range(size + 1)]
        if mask in fields:
            raise OverflowSuspected(f"a field reached 2^{layout.width} - 1")
        counts.extend(fields[:size])
        ballot_counts.append(fields[size])
    if len(set(ballot_counts)) > 1:
        raise CountMismatch(f"sub-vector count fields disagree: {ballot_counts}")
    return TallyVector(tuple(counts), ballot_counts[0] if ballot_counts else 0)


def writein_to_int(name: str) -> int:
    return int.from_bytes(unicodedata.normalize("NFC", name).encode("utf-8"), "big")


def int_to_writein(value: int) -> str:
    if value == 0:
        return ""
    return value.to_bytes((value.bit_length() + 7) // 8, "big").decode("utf-8")


def max_writein_bytes(pk: PaillierPublicKey) -> int:
    return message_bit_bound(pk) // 8


def encode_writein(name: str, pk: PaillierPublicKey, x: int | None = None) -> int:
    raw = unicodedata.normalize("NFC", name).encode("utf-8")
    if len(raw) > max_writein_bytes(pk):
        raise NameTooLong(f"write-in is {len(raw)} bytes, limit {max_writein_bytes(pk)}")
    return encrypt(pk, int.from_bytes(raw, "big"), x)
