import pytest

from sparcas.workspace import generate_grid, standalone_roundabout


@pytest.fixture(scope="session")
def ws16():
    return generate_grid(16, 16)


@pytest.fixture(scope="session")
def ws100():
    return generate_grid(100, 100)


@pytest.fixture(scope="session")
def rb4(ws16):
    # the centre roundabout has an entry and an exit at every slot
    return next(rb for rb in ws16.intersections if len(rb.entries) == 4)


@pytest.fixture(scope="session")
def rb6():
    return standalone_roundabout(6).intersections[0]


@pytest.fixture
def criterion(request):
    """Record an acceptance verdict; printed in the terminal summary."""
    results = request.config.__dict__.setdefault("_sparcas_criteria", {})

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        results[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.__dict__.get("_sparcas_criteria")
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
