from __future__ import annotations

import random

import pytest

from gramdiff.generator import Sampler, SamplerConfig
from gramdiff.ir import Block
from gramdiff.profiles import shipped_grammar, shipped_context


@pytest.fixture(scope="session")
def grammar():
    return shipped_grammar()


@pytest.fixture()
def root_ctx():
    # Function-scoped: contexts are mutable.
    return shipped_context()


@pytest.fixture(scope="session")
def block_pool(grammar) -> list[Block]:
    """A reusable pool of sampled blocks for property tests."""
    ctx = shipped_context()
    sampler = Sampler(grammar, SamplerConfig(simplicity_bias=0.55, rng_seed=1234))
    return [sampler.sample_block(ctx, random.Random(90_000 + i)) for i in range(60)]


def make_sampler(grammar, **overrides) -> Sampler:
    cfg = SamplerConfig(**overrides)
    return Sampler(grammar, cfg)
