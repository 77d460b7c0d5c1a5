"""Independent reference implementations used as test oracles.

These deliberately avoid the library's code paths: ranks come from sorting
patterns lexicographically, expectations from explicit enumeration, and
Jacobians from finite differences.
"""
import itertools

import numpy as np
import pytest


def lexicographic_ranks(n):
    """Map pattern -> rank by sorting all patterns, most important bit first,
    satisfied before unsatisfied."""
    patterns = sorted(itertools.product([1, 0], repeat=n), reverse=True)
    return {p: i + 1 for i, p in enumerate(patterns)}


def enumerated_expected_rank(q):
    """E[-rank] by summing P(pattern) * (-rank) over every pattern."""
    n = len(q)
    ranks = lexicographic_ranks(n)
    total = 0.0
    for pattern, r in ranks.items():
        prob = 1.0
        for bit, qi in zip(pattern, q):
            prob *= qi if bit else 1.0 - qi
        total += prob * (-r)
    return total


def rotation_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
