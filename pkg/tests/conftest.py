import numpy as np
import pytest

from dielink.synth import synth_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_synth(tmp_path_factory):
    """Three small synthetic datasets (3 dies x 3 coins, 96 px)."""
    root = tmp_path_factory.mktemp("synth")
    return [synth_dataset(root / f"s{k}", n_dies=3, coins_per_die=3, noise_level=0.2,
                          seed=100 + k, size=96, dataset_id=f"s{k}")
            for k in range(3)]


# --- acceptance summary: one line per criterion ------------------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        outcome = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        _ACCEPTANCE[name] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split("_")[2])):
        number, label = name.split("_")[2], " ".join(name.split("_")[3:])
        terminalreporter.write_line(f"criterion {number} ({label}): {_ACCEPTANCE[name]}")
