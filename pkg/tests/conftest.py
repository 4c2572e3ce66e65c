"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

_results = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _results[name] = ("PASS" if report.outcome == "passed" else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, (outcome, detail) in sorted(_results.items()):
        label = name.replace("test_", "", 1)
        code, _, rest = label.partition("_")
        terminalreporter.write_line(f"{code.upper()} {rest.replace('_', ' ')}: {outcome}  {detail}")
