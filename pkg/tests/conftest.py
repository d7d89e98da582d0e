import random

import pytest


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


def random_tile(rng, n, lo=-8, hi=7):
    return [[rng.randint(lo, hi) for _ in range(n)] for _ in range(n)]


def random_matrix(rng, h, w, lo=-8, hi=7):
    return [[rng.randint(lo, hi) for _ in range(w)] for _ in range(h)]
