"""Suite-wide pytest hooks."""
from __future__ import annotations


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per acceptance criterion."""
    reports = []
    for key in ("passed", "failed", "error"):
        reports.extend(terminalreporter.stats.get(key, []))
    seen: dict[str, bool] = {}
    for rep in reports:
        nodeid = getattr(rep, "nodeid", "")
        if "test_acceptance.py" not in nodeid:
            continue
        name = nodeid.split("::")[-1]
        seen[name] = seen.get(name, True) and rep.passed
    if not seen:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(seen):
        label = name.removeprefix("test_criterion_").replace("_", " ")
        status = "PASS" if seen[name] else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {label}: {status}")
