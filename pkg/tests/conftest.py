from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from idecomp.space import FeatureSpace, LatentMarginal, MixingSpec, from_mixing, independent  # noqa: E402

# X1 = U, X2 = U + V, X3 = W with Rademacher U, V, W
COUNTER_A = [[1, 0, 0], [1, 1, 0], [0, 0, 1]]
# X1 = U, X2 = U + V
FA_A = [[1, 0], [1, 1]]

INDEP3_VALUES = ([0.0, 0.5, 1.0], [0.0, 0.4, 1.0], [-0.5, 0.0, 0.5])
INDEP3_PROBS = ([0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.3, 0.4])


def rademacher_space(A) -> FeatureSpace:
    A = np.asarray(A, dtype=float)
    latents = tuple(LatentMarginal.rademacher() for _ in range(A.shape[1]))
    return from_mixing(MixingSpec(latents, A), "exact")


@pytest.fixture(scope="session")
def counter_space():
    return rademacher_space(COUNTER_A)


@pytest.fixture(scope="session")
def fa_space():
    return rademacher_space(FA_A)


@pytest.fixture(scope="session")
def indep3():
    return independent(INDEP3_VALUES, INDEP3_PROBS)


@pytest.fixture(scope="session")
def indep2():
    return independent(INDEP3_VALUES[:2], INDEP3_PROBS[:2])


@pytest.fixture(scope="session")
def rad2():
    return rademacher_space(np.eye(2))


@pytest.fixture(scope="session")
def rad3():
    return rademacher_space(np.eye(3))


def oracle_support(space: FeatureSpace):
    pts = [tuple(float(v) for v in row) for row in space.points]
    return pts, [float(p) for p in space.weights]


# verdict lines of the acceptance suite, printed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
