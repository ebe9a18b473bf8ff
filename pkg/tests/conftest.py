import random

import pytest

from newsarena.core import Verdict


@pytest.fixture
def rng() -> random.Random:
    return random.Random(1234)


def random_verdicts(rng: random.Random, n: int) -> list[Verdict]:
    return [Verdict.FAKE if rng.random() < 0.5 else Verdict.REAL for _ in range(n)]
