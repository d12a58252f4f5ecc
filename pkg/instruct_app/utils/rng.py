"""
Random streams.

Every run derives independent xoshiro256** streams from its 64-bit seed via
``SeedSequence(seed).spawn(4)``, in this order: data sampling, training noise
(times, noise vectors, latents), initial weights, and evaluation sampling.
"""

from dataclasses import dataclass

import numpy as np
from randomgen import Xoshiro256

SEED_MAX = 2 ** 64 - 1


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ValueError(f"Seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def make_rng(seed) -> np.random.Generator:
    """A numpy Generator on xoshiro256** seeded by an int or a SeedSequence."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(check_seed(seed))
    return np.random.Generator(Xoshiro256(seed))


@dataclass(frozen=True, eq=False)
class RunStreams:
    data: np.random.Generator
    train: np.random.Generator
    init: np.random.Generator
    eval: np.random.Generator


def spawn_streams(seed) -> RunStreams:
    children = np.random.SeedSequence(check_seed(seed)).spawn(4)
    return RunStreams(*(make_rng(child) for child in children))
