import pytest

from acots.netmodel import builtin_case


@pytest.fixture(scope="session")
def case6ww():
    return builtin_case("nesta_case6ww__api")


@pytest.fixture(scope="session")
def case9():
    return builtin_case("case9")


@pytest.fixture(scope="session")
def case14():
    return builtin_case("case14", ignore_taps=True)


@pytest.fixture(scope="session")
def toy3():
    return builtin_case("toy3")


ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(name, ok, detail)`` prints and asserts."""
    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        print(line)
        ACCEPTANCE.append((name, ok, detail))
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for name, ok, detail in ACCEPTANCE:
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
