import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = {
    1: "Shellshock worked example: coverage, scores, detection",
    2: "Effectiveness/detection arithmetic over published cells",
    3: "POST blind spot vs paired GET scenarios",
    4: "Service payload blind spot with C2 still detected",
    5: "Monotonicity over template pairs T <= T' and identity equivalence",
    6: "Ledger and session partition invariants",
    7: "Volume statistics oracle and byte-identical CLI reports",
}

_results = {}
_NAME_RE = re.compile(r"test_acceptance\.py::test_c(\d+)_")


def pytest_runtest_logreport(report):
    m = _NAME_RE.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        name = report.nodeid.split("::", 1)[1]
        _results.setdefault(int(m.group(1)), {})[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in CRITERIA.items():
        outcomes = _results.get(n)
        if not outcomes:
            tr.write_line(f"C{n} NOT RUN  {title}")
            continue
        failed = sorted(k for k, v in outcomes.items() if v != "passed")
        status = "PASS" if not failed else "FAIL"
        detail = f"  (failed: {', '.join(failed)})" if failed else ""
        tr.write_line(f"C{n} {status}  {title}{detail}")
