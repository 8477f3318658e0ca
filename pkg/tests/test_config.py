import json

import pytest

from homvote.config import SpecError, fixture_spec, fixture_text, parse_spec


def test_bundled_fixtures():
    pres = fixture_spec("presidential")
    assert [e.spec.contest_id for e in pres.contests] == ["president"]
    assert len(pres.layout("president").components) == 19
    small = fixture_spec("mexico_small")
    assert all(2 <= len(small.ballot_style(s)) <= 4 for s in small.states)
    chis = fixture_spec("chiapas")
    assert chis.key_bits == 3072 and chis.layout("governor_chiapas").subvector_count == 4


def test_spec_roundtrip():
    spec = fixture_spec("mexico_small")
    assert parse_spec(spec.to_json()).to_dict() == spec.to_dict()


def _mutate(name, fn):
    data = json.loads(fixture_text(name))
    fn(data)
    return json.dumps(data, indent=2)


def test_rejections_carry_line_numbers():
    text = _mutate("presidential", lambda d: d["contests"][0].update(coalitions=[["PAN", "PRI"], ["PRI", "MC"]]))
    with pytest.raises(SpecError) as exc:
        parse_spec(text)
    assert exc.value.line is not None

    with pytest.raises(SpecError) as exc:
        parse_spec('{\n "election_id": "x",\n "states": [}')
    assert exc.value.line == 3


def test_rejects_unknown_modality_and_states():
    with pytest.raises(SpecError):
        parse_spec(_mutate("presidential", lambda d: d.update(modalities=["postal"])))
    with pytest.raises(SpecError):
        parse_spec(_mutate("presidential", lambda d: d["contests"][0].update(states=["XX"])))


def test_too_many_contests_for_a_state():
    def five(d):
        base = d["contests"][0]
        d["contests"] = [dict(base, contest_id=f"c{i}") for i in range(5)]

    with pytest.raises(SpecError):
        parse_spec(_mutate("presidential", five))


def test_layout_must_fit_key():
    # the 529-component contest packed into a single sub-vector cannot fit 3072-bit keys
    with pytest.raises(SpecError):
        parse_spec(_mutate("chiapas", lambda d: d.update(capacity=600)))
    with pytest.raises(SpecError):
        parse_spec(_mutate("chiapas", lambda d: d.update(key_bits=512)))
