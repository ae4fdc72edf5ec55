import sys


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines where fd-level capture can't eat them."""
    mod = sys.modules.get("test_acceptance") \
        or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "VERDICT_LINES", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
