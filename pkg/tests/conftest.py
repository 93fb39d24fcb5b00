from __future__ import annotations

import pytest

from tasktree.config import load_config
from tasktree.gateway import GatewayTransportError
from tasktree.guards import default_prompts


class FailingBackend:
    """Simulates a total backend outage: every call raises."""

    def __init__(self) -> None:
        self.calls = 0

    def complete(self, messages):
        self.calls += 1
        raise GatewayTransportError("simulated outage")


@pytest.fixture(scope="session")
def cfg():
    return load_config()


@pytest.fixture(scope="session")
def prompts():
    return default_prompts()


@pytest.fixture
def failing_backend():
    return FailingBackend()
