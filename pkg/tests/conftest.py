import math

import pytest

from foimc import ProcessModel, RobustnessSpec, tune

PM_65_DEG = 1.1345  # 65 deg in radians, rounded to 4 decimals


@pytest.fixture(scope="session")
def example_one():
    return ProcessModel(k=0.43, tau=148.0, theta=40.0), RobustnessSpec(3.0, PM_65_DEG)


@pytest.fixture(scope="session")
def example_two():
    return ProcessModel(k=1.0, tau=0.5, theta=5.0), RobustnessSpec(3.0, PM_65_DEG)


@pytest.fixture(scope="session")
def tuned_one(example_one):
    return tune(*example_one)


@pytest.fixture(scope="session")
def tuned_two(example_two):
    return tune(*example_two)


def wrap_to_pi(x):
    return (x + math.pi) % (2 * math.pi) - math.pi
