"""Shared fixtures: a deliberately tiny channel config and dataset so the
unit tests stay fast. Anything training-heavy lives in test_acceptance.py
behind module-scoped fixtures."""
from __future__ import annotations

import pytest

from csidiff.chansim import ChannelConfig, build_dataset
from csidiff.profiles import load_profiles


@pytest.fixture(scope="session")
def tiny_cfg() -> ChannelConfig:
    return ChannelConfig(num_tx=4, num_subcarriers_kept=4, num_steps=40)


@pytest.fixture(scope="session")
def cdl_a():
    return load_profiles(["CDL-A"])


@pytest.fixture(scope="session")
def tiny_bundle(tiny_cfg, cdl_a):
    """24 samples of 4x4 CSI, 6 past / 4 future, split 12/6/6."""
    return build_dataset(
        tiny_cfg, cdl_a, 24, n_past=6, n_future=4,
        split_fracs=(0.5, 0.25, 0.25), seed=101,
    )
