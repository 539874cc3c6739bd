"""Shared small synthetic worlds."""

import pytest

from pumpsnn.synth import WorldConfig, generate_world

SMALL = dict(n_channels=12, n_coins=120, events_per_channel=10, corpus_docs_per_coin=2)


@pytest.fixture(scope="session")
def small_world():
    return generate_world(WorldConfig(seed=1, **SMALL))
