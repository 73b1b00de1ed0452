from __future__ import annotations

import pytest

from capmesh import harness
from capmesh.config import DEMO_DIR, load_config


@pytest.fixture()
def demo_dir():
    return DEMO_DIR


def make_stack(backend: str = "scripted"):
    config = load_config()
    config.reasoner.backend = backend
    stack = harness.boot(config)
    harness.seed(stack)
    return stack


@pytest.fixture()
def stack():
    s = make_stack()
    yield s
    s.shutdown()


@pytest.fixture()
def rules_stack():
    s = make_stack("rules")
    yield s
    s.shutdown()
