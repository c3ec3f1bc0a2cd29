import pytest

_CRITERIA = {}


class CriterionReport:
    """Collects one verdict line per acceptance criterion."""

    def record(self, key, passed, detail):
        _CRITERIA[key] = (bool(passed), detail)
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {key}: {detail}"
        print(line, flush=True)
        return passed


@pytest.fixture(scope="session")
def criterion():
    return CriterionReport()


def _order(key):
    num = "".join(ch for ch in key if ch.isdigit())
    return (int(num) if num else 0, key)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=_order):
        passed, detail = _CRITERIA[key]
        terminalreporter.write_line(
            f"[{'PASS' if passed else 'FAIL'}] criterion {key}: {detail}")
