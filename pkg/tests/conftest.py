import itertools
import math

import numpy as np
import pytest

from nastein.lattice import CovarianceModel

LN2 = math.log(2.0)


def block_points(n, d, corner=None):
    corner = corner or (0,) * d
    return [tuple(c + o for c, o in zip(corner, off))
            for off in itertools.product(range(n), repeat=d)]


def naive_block_cov(model, k1, k2, n):
    """Pairwise double sum over both blocks."""
    d = model.dim
    P = np.array(block_points(n, d, tuple(k1)))
    Q = np.array(block_points(n, d, tuple(k2)))
    return float(model(Q[None, :, :] - P[:, None, :]).sum())


@pytest.fixture
def extremal():
    return CovarianceModel.extremal(1.0, LN2, d=1)
