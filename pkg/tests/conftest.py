import pytest

from homvote.blindsig import sig_keygen
from homvote.config import fixture_spec
from homvote.election import BallotServer, BallotStore, Ledger, Registry
from homvote.paillier import keygen
from homvote.tally import TallyService

_criteria: dict[int, dict] = {}


@pytest.fixture(scope="session")
def keys512():
    return keygen(512)


@pytest.fixture(scope="session")
def signer512():
    return sig_keygen(512)


@pytest.fixture
def make_server(keys512, signer512):
    """In-memory server for a bundled spec (``presidential`` by default)."""

    def build(spec="presidential", directory=None):
        spec = fixture_spec(spec) if isinstance(spec, str) else spec
        pk, _ = keys512
        tally = TallyService(pk, signer512.verify_key, directory)
        return BallotServer(spec, pk, signer512, Registry(), BallotStore(), Ledger(), tally)

    return build


def pytest_runtest_logreport(report):
    number = getattr(report, "criterion_number", None)
    if number is None:
        return
    entry = _criteria.setdefault(number, {"title": report.criterion_title, "ok": True, "seen": False})
    if report.when == "call" or report.failed:
        entry["seen"] = True
        if report.failed:
            entry["ok"] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion_number = marker.args[0]
        report.criterion_title = marker.args[1]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ok"] and entry["seen"] else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {status}  {entry['title']}")
