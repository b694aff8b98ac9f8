"""Shared pytest wiring: prints the acceptance verdict table after a run."""

import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(mod.RESULTS, key=lambda r: str(r[0])):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[criterion {criterion}] {status}  {detail}")
