import pytest

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            number, title = m.args
            entry = _criteria.setdefault(
                number, {"title": title, "nodes": set(), "failed": False, "ran": 0, "detail": []}
            )
            entry["nodes"].add(item.nodeid)


def pytest_runtest_logreport(report):
    for entry in _criteria.values():
        if report.nodeid in entry["nodes"]:
            if report.when == "call":
                entry["ran"] += 1
                entry["detail"] += [str(v) for k, v in report.user_properties if k == "detail"]
            if report.failed:
                entry["failed"] = True


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        if entry["failed"]:
            status = "FAIL"
        elif entry["ran"] < len(entry["nodes"]):
            status = "NOT RUN"
        else:
            status = "PASS"
        line = f"criterion {number:>2} {status:<7} {entry['title']}"
        if entry["detail"]:
            line += "  [" + "; ".join(entry["detail"]) + "]"
        terminalreporter.write_line(line)
