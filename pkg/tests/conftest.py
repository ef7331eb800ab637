# Shared pytest fixtures

import pytest

from sosim.topology import block_fixture, validation_fixture_3node


@pytest.fixture(autouse=True)
def _no_ambient_seed(monkeypatch):
    """A seed exported in the shell must not leak into CLI defaults."""
    monkeypatch.delenv("SOSIM_SEED", raising=False)


@pytest.fixture
def three_node():
    """A1 (raw materials) -> A2 -> A3 (final consumer), plus the direct A1 -> A3 link."""
    return validation_fixture_3node()


@pytest.fixture
def block():
    return block_fixture()
