from dataclasses import replace

import pytest

from crossing.config import SessionConfig


@pytest.fixture
def tiny_config() -> SessionConfig:
    """Smallest legal session: 2 blocks x 2 trials, fast to simulate."""
    return replace(SessionConfig(), blocks=2, trials_per_block=2, seed=3)
