import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("repo", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def sphere_record(tmp_path_factory):
    """The bundled sphere validation preset, run once per session."""
    from borsem.config import load_preset
    from borsem.pipeline import run_experiment

    return run_experiment(load_preset("sphere-oracle"), str(tmp_path_factory.mktemp("sphere")))


@pytest.fixture(scope="session")
def bodies_record(tmp_path_factory):
    """The bundled three-body preset, run once per session (several minutes)."""
    from borsem.config import load_preset
    from borsem.pipeline import run_experiment

    return run_experiment(load_preset("paper-bodies"), str(tmp_path_factory.mktemp("paper")))


def pytest_configure(config):
    config.acceptance_lines = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.acceptance_lines
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
