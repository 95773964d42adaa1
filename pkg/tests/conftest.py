import random

import pytest

from deep_positron import codec
from deep_positron.codec import Code, FormatSpec


def posit_specs(ns=range(5, 9), es_values=(0, 1, 2)):
    return [FormatSpec.posit(n, es) for n in ns for es in es_values if es <= n - 3]


def float_specs(ns=range(5, 9), we_values=(2, 3, 4, 5)):
    return [FormatSpec.floating(we, n - 1 - we) for n in ns for we in we_values if n - 1 - we >= 1]


def fixed_specs(ns=range(5, 9)):
    return [FormatSpec.fixed(n, q) for n in ns for q in range(0, n)]


GRID = posit_specs() + float_specs() + fixed_specs()


def random_code(rng: random.Random, spec: FormatSpec) -> Code:
    """Uniform over codes with a real value (NaR, reserved floats and -0 excluded)."""
    return rng.choice(codec.finite_codes(spec))


@pytest.fixture
def rng():
    return random.Random(1234)


# -- acceptance summary ----------------------------------------------------------
#
# Tests tagged ``@pytest.mark.criterion("id", "text")`` get one PASS/FAIL line
# in the terminal summary; measured values recorded with ``record_property``
# are appended to the line.

_criteria: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, text): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    cid, text = marker.args
    callspec = getattr(item, "callspec", None)
    if callspec is not None:
        cid = f"{cid} {callspec.id}"
    entry = _criteria.setdefault(item.nodeid, {"cid": cid, "text": text, "ok": True, "props": []})
    if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
        entry["ok"] = False


def pytest_runtest_logreport(report):
    if report.nodeid in _criteria and report.when == "call":
        _criteria[report.nodeid]["props"] = list(report.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for entry in sorted(_criteria.values(), key=lambda e: e["cid"]):
        detail = ", ".join(f"{k}={v}" for k, v in entry["props"])
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"{status}  [{entry['cid']}] {entry['text']}" + (f"  ({detail})" if detail else ""))
