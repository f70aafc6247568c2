import pytest

ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """``with criterion(n, "title") as note:`` records PASS/FAIL for acceptance line ``n``."""
    from contextlib import contextmanager

    @contextmanager
    def run(n, title):
        details = []
        try:
            yield details.append
        except BaseException:
            ACCEPTANCE.setdefault(n, []).append((False, title, details))
            print(f"CRITERION {n} FAIL: {title} {'; '.join(details)}")
            raise
        ACCEPTANCE.setdefault(n, []).append((True, title, details))
        print(f"CRITERION {n} PASS: {title} {'; '.join(details)}")

    return run


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[n]
        n_ok = sum(passed for passed, _, _ in checks)
        verdict = "PASS" if n_ok == len(checks) else "FAIL"
        terminalreporter.write_line(f"CRITERION {n}: {verdict} ({n_ok}/{len(checks)} checks)")
        for passed, title, details in checks:
            if details or not passed:
                mark = "" if passed else "FAILED "
                terminalreporter.write_line(f"    {mark}{title}: {'; '.join(details)}")
