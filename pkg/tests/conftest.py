import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion.

    Usage: ``with criterion("1 ...") as check: check(cond, detail)``.  Every
    ``check`` that fails marks the line FAIL; the assertion is raised after the
    line is recorded so the report is complete even for red criteria.
    """

    class _Criterion:
        def __init__(self, name):
            self.name = name
            self.failures = []
            self.details = []

        def __call__(self, ok, detail):
            self.details.append(detail)
            if not ok:
                self.failures.append(detail)

        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc_type is not None:
                self.failures.append(f"{exc_type.__name__}: {exc}")
            status = "FAIL" if self.failures else "PASS"
            shown = self.failures if self.failures else self.details
            line = f"[{status}] criterion {self.name}: " + "; ".join(shown)
            _ACCEPTANCE.append(line)
            print(line)
            if exc_type is None and self.failures:
                raise AssertionError(line)
            return False

    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
