import numpy as np
import pytest

from metricreg.spaces import (
    SPD_CHOLESKY,
    SPD_FROBENIUS,
    WASSERSTEIN,
    QuantileFunction,
    SpaceSpec,
    SPDMatrix,
)


def random_quantile(rng, m=20, scale=1.0):
    """A random feasible quantile vector (sorted draws)."""
    return QuantileFunction(np.sort(rng.normal(0.0, scale, m)))


def random_spd(rng, m=3, eps=1e-8):
    a = rng.standard_normal((m, m))
    mat = a @ a.T + 0.5 * np.eye(m)
    return SPDMatrix(mat, eps=eps)


def random_object(rng, space: SpaceSpec):
    if space.kind == WASSERSTEIN:
        return random_quantile(rng, space.dims)
    return random_spd(rng, space.dims, space.eps)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(params=[WASSERSTEIN, SPD_FROBENIUS, SPD_CHOLESKY])
def any_space(request):
    dims = 20 if request.param == WASSERSTEIN else 3
    return SpaceSpec(request.param, dims)
