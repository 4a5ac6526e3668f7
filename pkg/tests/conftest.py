import random

import pytest


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)


def make_txid(rng, n=1):
    ids = [rng.randbytes(32) for _ in range(n)]
    return ids[0] if n == 1 else ids
