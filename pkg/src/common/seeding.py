"""Splittable seeding for replications and experiment cells"""
import numpy as np


def derive_seed(base, *keys):
    """Derive a 32-bit seed from a base seed and integer keys"""
    entropy = [int(base) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def make_rng(seed):
    return np.random.default_rng(seed)
