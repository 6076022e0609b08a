# criterion id -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str):
    ACCEPTANCE[criterion] = (bool(passed), detail)
    assert passed, detail


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

