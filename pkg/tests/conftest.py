import numpy as np
import pytest

from shieldcraft.env import proposition_table
from shieldcraft.ltl import PropositionTable


@pytest.fixture(scope="session")
def table3():
    return PropositionTable(("p0", "p1", "p2"))


@pytest.fixture(scope="session")
def env_table():
    return proposition_table()


@pytest.fixture(scope="session")
def simple_run(tmp_path_factory):
    """Full simple-task pipeline at the default seed (shared by the
    acceptance tests)."""
    from shieldcraft.pipeline import default_config, run_pipeline

    out = tmp_path_factory.mktemp("run_simple")
    return run_pipeline(default_config("simple", seed=0), out)


@pytest.fixture(scope="session")
def complex_run(tmp_path_factory):
    """Full complex-task pipeline at the default seed (shared by the
    acceptance tests)."""
    from shieldcraft.pipeline import default_config, run_pipeline

    out = tmp_path_factory.mktemp("run_complex")
    return run_pipeline(default_config("complex", seed=0), out)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
