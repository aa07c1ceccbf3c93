import itertools

import numpy as np
import pytest

from metricreg.errors import BadObjective, EmptyInput, NotPositiveDefinite, NotSymmetric
from metricreg.kernel import (
    OptimizerOptions,
    brent_min,
    cholesky_factor,
    isotonic_regression,
    isotonic_rows,
    multistart_points,
    nelder_mead,
    spd_inverse_ridge,
    sym_eig_clip,
)


# ---------------------------------------------------------------------------
# Isotonic regression
# ---------------------------------------------------------------------------

def brute_force_isotonic(values, weights=None):
    """Exact oracle: enumerate all consecutive-block partitions.

    The optimum is piecewise constant on consecutive blocks with strictly
    increasing block means, so scanning every partition finds it exactly.
    """
    v = np.asarray(values, dtype=float)
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)
    n = v.size
    best, best_obj = None, np.inf
    for cuts in itertools.product([0, 1], repeat=n - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [n]
        out = np.empty(n)
        means = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            mean = np.average(v[lo:hi], weights=w[lo:hi])
            means.append(mean)
            out[lo:hi] = mean
        if any(b <= a for a, b in zip(means, means[1:])):
            continue
        obj = float(np.sum(w * (out - v) ** 2))
        if obj < best_obj:
            best, best_obj = out, obj
    return best


def test_isotonic_already_monotone():
    np.testing.assert_array_equal(isotonic_regression([1, 2, 3]), [1, 2, 3])


def test_isotonic_two_point_pool():
    np.testing.assert_allclose(isotonic_regression([3, 1]), [2, 2])
    np.testing.assert_allclose(brute_force_isotonic([3, 1]), [2, 2])


def test_isotonic_three_point():
    expected = brute_force_isotonic([1, 3, 2])
    np.testing.assert_allclose(expected, [1, 2.5, 2.5])
    np.testing.assert_allclose(isotonic_regression([1, 3, 2]), expected)


def test_isotonic_random_against_oracle(rng):
    for _ in range(50):
        n = rng.integers(1, 7)
        v = rng.normal(size=n)
        w = rng.uniform(0.5, 2.0, size=n)
        np.testing.assert_allclose(
            isotonic_regression(v, w), brute_force_isotonic(v, w), atol=1e-10
        )


def test_isotonic_properties(rng):
    for _ in range(30):
        v = rng.normal(size=rng.integers(2, 30))
        out = isotonic_regression(v)
        assert np.all(np.diff(out) >= 0)
        np.testing.assert_allclose(isotonic_regression(out), out, atol=1e-12)
        assert abs(out.mean() - v.mean()) <= 1e-12 * max(1, abs(v.mean()))


def test_isotonic_empty_and_bad_weights():
    with pytest.raises(EmptyInput):
        isotonic_regression([])
    with pytest.raises(ValueError):
        isotonic_regression([1.0, 2.0], [1.0, -1.0])


def test_isotonic_rows_matches_scalar(rng):
    rows = rng.normal(size=(40, 15))
    batch = isotonic_rows(np.ascontiguousarray(rows))
    for i in range(rows.shape[0]):
        np.testing.assert_allclose(batch[i], isotonic_regression(rows[i]), atol=1e-12)


# ---------------------------------------------------------------------------
# Symmetric matrix kernels
# ---------------------------------------------------------------------------

def test_sym_eig_clip_identity_cases():
    np.testing.assert_allclose(sym_eig_clip(np.eye(3), 1e-8), np.eye(3))
    np.testing.assert_allclose(
        sym_eig_clip(np.diag([2.0, -3.0]), 0.1), np.diag([2.0, 0.1])
    )


def test_sym_eig_clip_indefinite():
    out = sym_eig_clip(np.array([[1.0, 2.0], [2.0, 1.0]]), 1e-8)
    np.testing.assert_allclose(out, np.full((2, 2), 1.5), atol=1e-7)
    assert np.linalg.eigvalsh(out)[0] >= 1e-8 - 1e-12


def test_sym_eig_clip_rejects_asymmetric():
    with pytest.raises(NotSymmetric):
        sym_eig_clip(np.array([[1.0, 2.0], [0.0, 1.0]]), 1e-8)


def test_sym_eig_clip_floor(rng):
    for _ in range(20):
        a = rng.standard_normal((4, 4))
        a = 0.5 * (a + a.T)
        out = sym_eig_clip(a, 1e-6)
        assert np.linalg.eigvalsh(out)[0] >= 1e-6 - 1e-12


def test_cholesky_factor_examples():
    np.testing.assert_allclose(cholesky_factor(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(cholesky_factor(4 * np.eye(3)), 2 * np.eye(3))
    r = cholesky_factor(np.array([[4.0, 2.0], [2.0, 5.0]]))
    np.testing.assert_allclose(r, [[2.0, 1.0], [0.0, 2.0]])
    np.testing.assert_allclose(r.T @ r, [[4.0, 2.0], [2.0, 5.0]])


def test_cholesky_factor_roundtrip(rng):
    for _ in range(100):
        m = rng.integers(2, 6)
        a = rng.standard_normal((m, m))
        spd = a @ a.T + 0.1 * np.eye(m)
        r = cholesky_factor(spd)
        assert np.all(np.diag(r) > 0)
        assert np.all(np.tril(r, -1) == 0)
        err = np.linalg.norm(r.T @ r - spd) / np.linalg.norm(spd)
        assert err <= 1e-10


def test_cholesky_factor_rejects_non_spd():
    with pytest.raises(NotPositiveDefinite):
        cholesky_factor(np.diag([1.0, -1.0]))
    with pytest.raises(NotPositiveDefinite):
        cholesky_factor(np.array([[1.0, 5.0], [0.0, 1.0]]))


def test_spd_inverse_ridge_basalong():
    np.testing.assert_allclose(spd_inverse_ridge(np.eye(2)), np.eye(2), atol=1e-8)
    np.testing.assert_allclose(
        spd_inverse_ridge(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]), atol=1e-8
    )


def test_spd_inverse_ridge_rank_deficient():
    a = np.array([[1.0, 1.0], [1.0, 1.0]])
    m = spd_inverse_ridge(a)
    assert np.all(np.isfinite(m))
    lam = 1e-10 * np.trace(a) / 2
    resid = np.linalg.norm((a + lam * np.eye(2)) @ m - np.eye(2))
    assert resid <= 1e-6


# ---------------------------------------------------------------------------
# Derivative-free minimization
# ---------------------------------------------------------------------------

def test_nelder_mead_quadratic():
    res = nelder_mead(lambda x: (x[0] - 3.0) ** 2, [0.0], OptimizerOptions())
    assert abs(res.x[0] - 3.0) <= 1e-5
    assert res.converged


def test_nelder_mead_rosenbrock():
    def rosen(x):
        return 100.0 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2

    res = nelder_mead(rosen, [-1.2, 1.0], OptimizerOptions(max_iter=2000))
    assert res.fun <= 1e-8
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-3)


def test_nelder_mead_multistart_finds_global():
    # Two separated minima: value 1 at 0, value 0 at 5.
    def f(x):
        v = x[0]
        return v * v + 1.0 if v <= 2.5 else (v - 5.0) ** 2

    grid = np.linspace(-4, 9, 20001)
    dense_argmin = grid[np.argmin([f([v]) for v in grid])]
    assert abs(dense_argmin - 5.0) <= 1e-3

    res = nelder_mead(
        f, [0.0], OptimizerOptions(multistarts=8, restart_seed=3, box_half_width=6.0)
    )
    assert abs(res.x[0] - 5.0) <= 1e-4


def test_nelder_mead_value_never_worse_than_starts():
    opts = OptimizerOptions(multistarts=8, restart_seed=11)

    def f(x):
        return float(np.sum((x - 1.7) ** 2) + np.sin(3 * x[0]))

    res = nelder_mead(f, [0.0, 0.0], opts)
    for start in multistart_points(np.zeros(2), opts.box_half_width, opts.multistarts,
                                   opts.restart_seed):
        assert res.fun <= f(start) + 1e-12


def test_nelder_mead_convex_quadratics(rng):
    for dim in range(1, 6):
        a = rng.standard_normal((dim, dim))
        h = a @ a.T + 0.5 * np.eye(dim)
        center = rng.normal(size=dim)

        def f(x):
            d = x - center
            return float(d @ h @ d)

        res = nelder_mead(f, np.zeros(dim), OptimizerOptions(restart_seed=dim))
        assert res.fun <= 1e-8


def test_nelder_mead_bad_objective():
    with pytest.raises(BadObjective):
        nelder_mead(lambda x: float("nan"), [0.0], OptimizerOptions())


def test_nelder_mead_tolerates_inf_away_from_start():
    def f(x):
        return np.inf if x[0] > 2.0 else (x[0] - 1.0) ** 2

    res = nelder_mead(f, [0.0], OptimizerOptions())
    assert abs(res.x[0] - 1.0) <= 1e-5


def test_optimizer_options_validation():
    with pytest.raises(ValueError):
        OptimizerOptions(tol=0.0)
    with pytest.raises(ValueError):
        OptimizerOptions(max_iter=0)
    with pytest.raises(ValueError):
        OptimizerOptions(multistarts=0)


@pytest.mark.parametrize(
    "f,lo,hi,expected,tol",
    [
        (lambda c: (c - 2.0) ** 2, -5.0, 5.0, 2.0, 1e-6),
        (np.cos, 0.1, 6.0, np.pi, 1e-5),
        (lambda c: (c * c - 1.0) ** 2, 0.0, 3.0, 1.0, 1e-6),
    ],
)
def test_brent_min(f, lo, hi, expected, tol):
    # Dense-grid oracle confirms the bracketed argmin.
    grid = np.linspace(lo, hi, 200001)
    dense = grid[np.argmin([f(v) for v in grid])]
    assert abs(dense - expected) <= 1e-3
    assert abs(brent_min(f, lo, hi, tol=1e-8) - expected) <= tol


def test_brent_min_validates_bounds():
    with pytest.raises(ValueError):
        brent_min(lambda c: c * c, 1.0, 1.0, 1e-6)
