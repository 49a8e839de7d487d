import numpy as np
import pytest

from scalecalc.gridfn import Grid, GridFunction, Polynomial, sample

# dyadic steps keep every node and every quotient exactly representable
DYADIC_H = 2.0 ** -10


@pytest.fixture
def dyadic_grid():
    return Grid.over(0.0, 1.0, DYADIC_H, n_pad=64)


@pytest.fixture
def coarse_grid():
    # h = 0.05, so k = 2 gives eps = 0.1 and t = 1 is a node
    return Grid.over(0.0, 1.0, 0.05, n_pad=4)


def line(grid, slope=1.0, offset=0.0):
    return sample(Polynomial((offset, slope)), grid)


def core_sup(f: GridFunction) -> float:
    return float(np.max(np.abs(f.core())))
