"""Shared fixtures; collects acceptance outcomes and prints one line per criterion."""

from collections import OrderedDict

import pytest

_ACCEPTANCE = OrderedDict()


@pytest.fixture
def criterion():
    """``criterion(number, title, ok, detail)`` records one check of a criterion."""

    def record(number, title, ok, detail):
        entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "details": []})
        entry["ok"] = entry["ok"] and bool(ok)
        entry["details"].append(("ok" if ok else "FAILED") + ": " + detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number} {'PASS' if entry['ok'] else 'FAIL'}: {entry['title']}")
        for line in entry["details"]:
            terminalreporter.write_line(f"    {line}")
