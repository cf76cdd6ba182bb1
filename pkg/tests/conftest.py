from __future__ import annotations

import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion -> list of (part, passed, detail); filled by test_acceptance
ACCEPTANCE: dict = {}


def record(criterion: int, part: str, passed: bool, detail: str) -> None:
    line = f"[{part}] {'PASS' if passed else 'FAIL'}: {detail}"
    print(line)
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[crit]
        ok = all(p for _, p, _ in parts)
        tr.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
        for part, passed, detail in parts:
            tr.write_line(f"    {part}: {'PASS' if passed else 'FAIL'}  {detail}")
