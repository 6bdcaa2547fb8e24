import numpy as np
import pytest

from aesnet.synthetic import write_toy_dataset

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def record_criterion():
    """Record one acceptance criterion outcome; printed in the terminal summary."""

    def record(name: str, passed: bool, detail: str = "") -> None:
        _ACCEPTANCE.append((name, passed, detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    directory = tmp_path_factory.mktemp("toy")
    return directory, write_toy_dataset(directory, n_images=64, size=64, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
