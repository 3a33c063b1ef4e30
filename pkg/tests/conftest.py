"""Shared pytest fixtures and configuration."""

import random

import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _seed_random():
    """Seed the global generators before each test.

    Library code draws only from explicit ``RngStreams``; the seeding covers
    the ad-hoc tensors tests build with ``torch.randn`` and ``np.random``.
    """
    random.seed(0)
    np.random.seed(0)
    torch.manual_seed(0)
