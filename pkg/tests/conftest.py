import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    report = getattr(mod, "REPORT", None)
    if not report:
        return
    terminalreporter.section("acceptance criteria")
    order = lambda k: (int("".join(ch for ch in k if ch.isdigit())), k)
    for key in sorted(report, key=order):
        terminalreporter.write_line(report[key])
