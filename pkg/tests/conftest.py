import pytest

_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record the outcome of one acceptance criterion.

    ``criterion(k, title, checks, runtime, budget)`` takes ``checks`` as a list
    of ``(name, ok, detail)`` and returns the overall verdict, which includes
    the runtime budget.
    """
    def record(k, title, checks, runtime, budget):
        checks = list(checks) + [("runtime", runtime < budget, f"{runtime:.1f}s < {budget:g}s")]
        ok = all(c[1] for c in checks)
        if k in _CRITERIA:   # a criterion split over several tests
            prev_title, prev_ok, prev_checks = _CRITERIA[k]
            _CRITERIA[k] = (prev_title, prev_ok and ok, prev_checks + checks)
        else:
            _CRITERIA[k] = (title, ok, checks)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for k in sorted(_CRITERIA):
        title, ok, checks = _CRITERIA[k]
        tr.write_line(f"criterion {k:>2} {'PASS' if ok else 'FAIL'}  {title}")
        for name, c_ok, detail in checks:
            tr.write_line(f"      {'ok  ' if c_ok else 'FAIL'} {name}: {detail}")
