import numpy as np
import pytest

from liecubics import LieAlgebra, Metric


@pytest.fixture
def so3():
    return LieAlgebra.so3()


@pytest.fixture
def abelian2():
    return LieAlgebra.abelian(2)


@pytest.fixture
def bi_metric(so3):
    return Metric(so3, np.eye(3), bi_invariant=True)


@pytest.fixture
def aniso_metric(so3):
    return Metric(so3, np.diag([1.0, 2.0, 3.0]))


def random_spd(rng, dim, floor=0.1):
    A = rng.normal(size=(dim, dim))
    return A.T @ A + floor * np.eye(dim)
