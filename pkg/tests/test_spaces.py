import numpy as np
import pytest

from conftest import random_object
from metricreg.errors import (
    DimensionError,
    EmptyInput,
    IllPosedObjective,
    NotPositiveDefinite,
)
from metricreg.spaces import (
    SPD_CHOLESKY,
    SPD_FROBENIUS,
    WASSERSTEIN,
    QuantileFunction,
    RawObject,
    SpaceSpec,
    SPDMatrix,
    combine,
    coords_distance,
    distance,
    grid_points,
    project,
    project_coords,
    stack_coords,
    to_coords,
    weighted_frechet_mean,
)


def test_grid_points_midpoint():
    g = grid_points(20)
    assert g.shape == (20,)
    np.testing.assert_allclose(g[0], 1 / 40)
    np.testing.assert_allclose(g[-1], 39 / 40)
    np.testing.assert_allclose(g, 1 - g[::-1])


def test_space_spec_validation():
    with pytest.raises(ValueError):
        SpaceSpec("unknown", 3)
    with pytest.raises(ValueError):
        SpaceSpec(WASSERSTEIN, 1)
    with pytest.raises(ValueError):
        SpaceSpec(SPD_FROBENIUS, 3, eps=0.0)


def test_quantile_function_validation():
    QuantileFunction([0.0, 0.0, 1.0])  # ties allowed
    with pytest.raises(ValueError):
        QuantileFunction([1.0, 0.0])
    with pytest.raises(DimensionError):
        QuantileFunction([1.0])


def test_spd_matrix_validation():
    with pytest.raises(ValueError):
        SPDMatrix(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotPositiveDefinite):
        SPDMatrix(np.diag([1.0, -1.0]))


# ---------------------------------------------------------------------------
# distance
# ---------------------------------------------------------------------------

def test_distance_identity_and_shift():
    space = SpaceSpec(WASSERSTEIN, 20)
    a = QuantileFunction(np.linspace(0, 1, 20))
    assert distance(space, a, a) == 0.0
    b = QuantileFunction(a.values + 1.0)
    np.testing.assert_allclose(distance(space, a, b), 1.0)


def test_distance_spd_examples():
    chol = SpaceSpec(SPD_CHOLESKY, 3)
    d = distance(chol, SPDMatrix(np.eye(3)), SPDMatrix(4 * np.eye(3)))
    np.testing.assert_allclose(d, np.sqrt(3.0))
    fro = SpaceSpec(SPD_FROBENIUS, 3)
    d = distance(fro, SPDMatrix(np.eye(3)), SPDMatrix(2 * np.eye(3)))
    np.testing.assert_allclose(d, np.sqrt(3.0))


def test_distance_dimension_mismatch():
    space = SpaceSpec(WASSERSTEIN, 20)
    with pytest.raises(DimensionError):
        distance(space, QuantileFunction(np.zeros(10)), QuantileFunction(np.zeros(10)))


def test_metric_axioms(any_space, rng):
    for _ in range(200):
        a, b, c = (random_object(rng, any_space) for _ in range(3))
        dab = distance(any_space, a, b)
        assert dab == distance(any_space, b, a)
        assert distance(any_space, a, a) == 0.0
        assert distance(any_space, a, c) <= dab + distance(any_space, b, c) + 1e-10


# ---------------------------------------------------------------------------
# combine
# ---------------------------------------------------------------------------

def test_combine_identity_midpoint_extrapolation():
    space = SpaceSpec(WASSERSTEIN, 2)
    y = QuantileFunction([0.0, 2.0])
    out = combine(space, [1.0], [y])
    np.testing.assert_array_equal(out.payload, y.values)

    z = QuantileFunction([2.0, 4.0])
    np.testing.assert_allclose(combine(space, [0.5, 0.5], [y, z]).payload, [1.0, 3.0])

    a = QuantileFunction([0.0, 1.0])
    b = QuantileFunction([0.0, 3.0])
    np.testing.assert_allclose(combine(space, [1.5, -0.5], [a, b]).payload, [0.0, 0.0])


def test_combine_empty():
    with pytest.raises(EmptyInput):
        combine(SpaceSpec(WASSERSTEIN, 2), [], [])


def test_combine_cholesky_in_factor_coordinates():
    space = SpaceSpec(SPD_CHOLESKY, 2)
    a = SPDMatrix(np.eye(2))
    b = SPDMatrix(4 * np.eye(2))
    raw = combine(space, [0.5, 0.5], [a, b])
    # Factors are I and 2I; factor-space midpoint is 1.5 I.
    np.testing.assert_allclose(raw.payload, 1.5 * np.eye(2))


# ---------------------------------------------------------------------------
# project
# ---------------------------------------------------------------------------

def test_project_feasible_identity():
    space = SpaceSpec(WASSERSTEIN, 3)
    out = project(space, RawObject(WASSERSTEIN, [0.0, 0.5, 2.0]))
    np.testing.assert_array_equal(out.values, [0.0, 0.5, 2.0])


def test_project_isotonic_example():
    space = SpaceSpec(WASSERSTEIN, 3)
    out = project(space, RawObject(WASSERSTEIN, [1.0, 3.0, 2.0]))
    np.testing.assert_allclose(out.values, [1.0, 2.5, 2.5])


def test_project_frobenius_example():
    space = SpaceSpec(SPD_FROBENIUS, 2)
    out = project(space, RawObject(SPD_FROBENIUS, [[1.0, 2.0], [2.0, 1.0]]))
    np.testing.assert_allclose(out.entries, np.full((2, 2), 1.5), atol=1e-7)


def test_project_cholesky_clips_factor_diagonal():
    space = SpaceSpec(SPD_CHOLESKY, 2)
    raw = RawObject(SPD_CHOLESKY, np.array([[-1.0, 0.5], [0.0, 2.0]]))
    out = project(space, raw)
    r = to_coords(space, out)
    assert r[0, 0] >= space.eps - 1e-15
    np.testing.assert_allclose(r[1, 1], 2.0)


def test_project_idempotent(any_space, rng):
    for _ in range(40):
        raw = RawObject(any_space.kind, _random_raw(rng, any_space))
        once = to_coords(any_space, project(any_space, raw))
        twice = to_coords(any_space, project(any_space, RawObject(any_space.kind, once)))
        np.testing.assert_allclose(twice, once, atol=1e-12)


def _random_raw(rng, space):
    if space.kind == WASSERSTEIN:
        return rng.normal(size=space.dims)
    if space.kind == SPD_FROBENIUS:
        a = rng.standard_normal((space.dims, space.dims))
        return 0.5 * (a + a.T)
    return np.triu(rng.standard_normal((space.dims, space.dims)))


def test_project_sampled_optimality(any_space, rng):
    # project(r) is no farther from r than any feasible probe, in the flat
    # ambient metric of the space's coordinates.
    for _ in range(100):
        raw = _random_raw(rng, any_space)
        proj = to_coords(any_space, project(any_space, RawObject(any_space.kind, raw)))
        d_star = coords_distance(any_space, raw, proj)
        for _ in range(100):
            probe = to_coords(any_space, random_object(rng, any_space))
            assert d_star <= coords_distance(any_space, raw, probe) + 1e-10


# ---------------------------------------------------------------------------
# weighted Frechet mean
# ---------------------------------------------------------------------------

def test_wfm_equal_weights_is_pointwise_average(rng):
    space = SpaceSpec(WASSERSTEIN, 20)
    objs = [random_object(rng, space) for _ in range(7)]
    out = weighted_frechet_mean(space, objs, np.ones(7))
    np.testing.assert_allclose(out.values, np.mean([o.values for o in objs], axis=0))


def test_wfm_spd_midpoint():
    space = SpaceSpec(SPD_FROBENIUS, 3)
    out = weighted_frechet_mean(space, [SPDMatrix(np.eye(3)), SPDMatrix(3 * np.eye(3))],
                                [1.0, 1.0])
    np.testing.assert_allclose(out.entries, 2 * np.eye(3))


def test_wfm_negative_weight_example():
    space = SpaceSpec(WASSERSTEIN, 2)
    a = QuantileFunction([0.0, 1.0])
    b = QuantileFunction([0.0, 3.0])
    out = weighted_frechet_mean(space, [a, b], [3.0, -1.0])
    np.testing.assert_allclose(out.values, [0.0, 0.0])


def test_wfm_weight_rescale_invariance(any_space, rng):
    objs = [random_object(rng, any_space) for _ in range(6)]
    w = rng.uniform(0.2, 2.0, 6)
    base = weighted_frechet_mean(any_space, objs, w)
    scaled = weighted_frechet_mean(any_space, objs, 7.3 * w)
    assert distance(any_space, base, scaled) <= 1e-12


def test_wfm_nonpositive_total_weight():
    space = SpaceSpec(WASSERSTEIN, 2)
    objs = [QuantileFunction([0.0, 1.0]), QuantileFunction([1.0, 2.0])]
    with pytest.raises(IllPosedObjective):
        weighted_frechet_mean(space, objs, [1.0, -1.0])


def test_wfm_is_objective_minimizer(any_space, rng):
    # Direct check of the argmin property against random feasible probes.
    objs = [random_object(rng, any_space) for _ in range(5)]
    w = rng.uniform(-0.3, 1.5, 5)
    w[0] += max(0.0, 1.0 - w.sum())  # keep the total positive
    out = weighted_frechet_mean(any_space, objs, w)

    def objective(candidate):
        return sum(wi * distance(any_space, yi, candidate) ** 2
                   for wi, yi in zip(w, objs))

    base = objective(out)
    for _ in range(50):
        assert base <= objective(random_object(rng, any_space)) + 1e-8


def test_stack_coords_rejects_non_spd_for_cholesky():
    space = SpaceSpec(SPD_CHOLESKY, 2)
    with pytest.raises(DimensionError):
        stack_coords(space, [QuantileFunction([0.0, 1.0])])


def test_project_coords_batch_matches_single(any_space, rng):
    rows = np.stack([_random_raw(rng, any_space) for _ in range(9)])
    batch = project_coords(any_space, rows)
    for i in range(9):
        single = project_coords(any_space, rows[i])
        np.testing.assert_allclose(batch[i], single, atol=1e-12)
