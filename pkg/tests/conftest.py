"""Acceptance reporting: one PASS/FAIL line per criterion at the end of the run."""

import pytest

_RESULTS: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(tag, title): acceptance criterion test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call":
        return
    tag, title = marker.args
    entry = _RESULTS.setdefault(tag, {"title": title, "passed": True, "seconds": 0.0, "notes": []})
    entry["passed"] &= rep.passed
    entry["seconds"] += rep.duration
    for name, value in item.user_properties:
        if name == "note":
            entry["notes"].append(value)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for tag in sorted(_RESULTS, key=lambda t: int(t[2:])):
        r = _RESULTS[tag]
        tr.write_line(f"{tag} {'PASS' if r['passed'] else 'FAIL'}  {r['title']}  ({r['seconds']:.1f} s)")
        for note in r["notes"]:
            tr.write_line(f"    {note}")
