import numpy as np
import pytest

from tabnas.oracle import toy_example
from tabnas.space import ResourceConstraint, SearchSpace


@pytest.fixture
def toy():
    """(table, constraint) of the 3x3 two-layer toy problem."""
    return toy_example()


@pytest.fixture
def toy_space(toy):
    return toy[0].space


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_space(rng, max_layers=3, max_choices=4, max_width=12):
    """A random space with at most a few hundred architectures."""
    L = int(rng.integers(1, max_layers + 1))
    layers = []
    for _ in range(L):
        c = int(rng.integers(1, max_choices + 1))
        layers.append(tuple(sorted(rng.choice(np.arange(1, max_width + 1), size=c, replace=False).tolist())))
    return SearchSpace(tuple(layers), int(rng.integers(1, 6)), int(rng.integers(1, 4)))


def median_limit(space):
    from tabnas.space import param_count_grid

    return ResourceConstraint(int(np.median(param_count_grid(space))))
