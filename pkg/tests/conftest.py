"""Collects the acceptance outcomes and prints one verdict line per criterion."""

import re

_CRITERIA: dict[int, dict] = {}
_NAME = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    m = _NAME.search(report.nodeid)
    if not m or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    num = int(m.group(1))
    entry = _CRITERIA.setdefault(num, {"label": m.group(2).replace("_", " "), "outcome": "FAIL", "notes": ""})
    entry["outcome"] = "PASS" if report.passed else "FAIL"
    entry["notes"] = "; ".join(f"{k}={v}" for k, v in report.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        line = f"criterion {num:2d} {e['outcome']}  {e['label']}"
        if e["notes"]:
            line += f"  [{e['notes']}]"
        terminalreporter.write_line(line)
