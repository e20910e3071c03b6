import pytest

from mdfl.ingest import load_dataset
from mdfl.synth import SynthConfig, synth


@pytest.fixture(scope="session")
def tiny_synth(tmp_path_factory):
    """9 x 12 regions, 300 users; enough for every fold to hold every class."""
    root = tmp_path_factory.mktemp("tiny")
    synth(SynthConfig(n_regions=12, n_users=300, noise=0.2, seed=5), root)
    return root


@pytest.fixture
def tiny_dataset(tiny_synth):
    return load_dataset(tiny_synth, k_folds=3, seed=1)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
        request.config._acceptance_lines.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
