import re

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_results = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    failed = report.failed or (report.when == "call" and not report.passed)
    prev = _results.get(n, ("PASS", ""))
    if failed:
        _results[n] = ("FAIL", _detail(report) or prev[1])
    elif report.when == "call":
        _results[n] = (prev[0], _detail(report) or prev[1])


def _detail(report):
    return "; ".join(str(v) for k, v in report.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        status, detail = _results[n]
        line = f"criterion {n:2d}: {status}"
        terminalreporter.write_line(f"{line}  {detail}" if detail else line)
