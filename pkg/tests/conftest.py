import numpy as np
import pytest

from shrinker_audit import models


def catalog():
    return [
        models.gaussian(3),
        models.round_sphere(3),
        models.sphere_cylinder(2, 2),
        models.sphere_product(2, 2),
    ]


@pytest.fixture(params=catalog(), ids=lambda m: m.label)
def model(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)
