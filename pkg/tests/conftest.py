import pathlib

import pytest

from mokka import crypto

SCENARIO_DIR = pathlib.Path(__file__).resolve().parent.parent / "scenarios"
GOLDEN_DIR = pathlib.Path(__file__).resolve().parent / "golden"


def make_cluster(n, seed="test"):
    keypairs = [crypto.keygen(f"{seed}-node-{i}".encode()) for i in range(n)]
    keyring = crypto.build_keyring(
        [(i, kp.public) for i, kp in enumerate(keypairs)]
    )
    return keypairs, keyring


@pytest.fixture(scope="session")
def cluster3():
    return make_cluster(3)


@pytest.fixture(scope="session")
def cluster5():
    return make_cluster(5)


def scenario_path(name: str) -> str:
    return str(SCENARIO_DIR / f"{name}.yaml")


def pytest_terminal_summary(terminalreporter):
    """Replay the acceptance scorecard where capture can't eat it."""
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.SCORECARD:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.SCORECARD:
            terminalreporter.write_line(line)
