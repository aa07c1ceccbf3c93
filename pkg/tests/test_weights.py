import pickle

import numpy as np
import pytest

from metricreg.errors import DegenerateSigma, DimensionError, SpecMismatch
from metricreg.weights import (
    GENERAL,
    GENERALIZED_LINEAR,
    LinkSpec,
    LinearFlavor,
    NonlinearFlavor,
    SeparableFlavor,
    generalized_linear_links,
    lfr_reducing_links,
    linear_weight,
    link_spec_from_descriptor,
    nonlinear_weight,
)


def test_linear_weight_center_is_one(rng):
    mu = rng.normal(size=3)
    sigma_inv = np.eye(3)
    for _ in range(10):
        assert linear_weight(rng.normal(size=3), mu, mu, sigma_inv) == 1.0


def test_linear_weight_direct_substitution():
    # p=1: 1 + (2-0)*1*(3-0) = 7
    w = linear_weight(np.array([2.0]), np.array([3.0]), np.array([0.0]), np.eye(1))
    assert w == 7.0
    # p=2 orthogonal displacement
    w = linear_weight(np.array([1.0, 1.0]), np.array([1.0, -1.0]),
                      np.zeros(2), np.eye(2))
    assert w == 1.0


def test_linear_weight_dimension_error():
    with pytest.raises(DimensionError):
        linear_weight(np.zeros(2), np.zeros(3), np.zeros(2), np.eye(2))
    with pytest.raises(DimensionError):
        linear_weight(np.zeros(2), np.zeros(2), np.zeros(2), np.eye(3))


def _quadratic_links(p):
    return generalized_linear_links([{"base": "square_shift", "scale": 1.0,
                                      "offset": -1.0}] * p)


def test_nonlinear_weight_zero_links(rng):
    links = generalized_linear_links([{"base": "zero"}] * 2)
    flavor = NonlinearFlavor(rng.normal(size=2))
    for _ in range(5):
        w = nonlinear_weight(rng.normal(size=2), rng.normal(size=2),
                             np.zeros(2), links, flavor)
        assert w == 1.0


def test_nonlinear_weight_at_center_covariate(rng):
    # X_i = mu makes the centered factor vanish regardless of the links.
    links = _quadratic_links(2)
    mu = rng.normal(size=2)
    flavor = NonlinearFlavor([0.7, -0.3])
    assert nonlinear_weight(mu, rng.normal(size=2), mu, links, flavor) == 1.0


def test_nonlinear_weight_direct_substitution():
    # p=1, f1(u)=u^2, mu=0, beta=1, X=2, x=1.5 -> 1 + 2*(1.5^2) = 5.5
    links = LinkSpec(GENERALIZED_LINEAR, 1, 1, (lambda u: u * u,))
    w = nonlinear_weight(np.array([2.0]), np.array([1.5]), np.array([0.0]),
                         links, NonlinearFlavor([1.0]))
    np.testing.assert_allclose(w, 5.5)


def test_nonlinear_weight_flavor_mismatch():
    links = _quadratic_links(2)
    with pytest.raises(SpecMismatch):
        nonlinear_weight(np.zeros(2), np.zeros(2), np.zeros(2), links, LinearFlavor())
    # Separable flavor needs sigma_h and sigma_inv.
    with pytest.raises(SpecMismatch):
        nonlinear_weight(np.zeros(2), np.zeros(2), np.zeros(2), links,
                         SeparableFlavor(1.0, "dist_mean_centered"))
    # Separable flavor on general-form links is rejected.
    general = LinkSpec(GENERAL, 2, 2, (lambda X, b: X[:, 0], lambda X, b: X[:, 1]))
    with pytest.raises(SpecMismatch):
        nonlinear_weight(np.zeros(2), np.zeros(2), np.zeros(2), general,
                         SeparableFlavor(1.0, "x"), sigma_h=np.ones(2),
                         sigma_inv=np.eye(2))


def test_separable_weight_value():
    links = generalized_linear_links([{"base": "identity"}] * 2)
    sigma_inv = np.eye(2)
    sigma_h = np.array([1.0, 0.0])
    x = np.array([2.0, 5.0])
    X_i = np.array([1.0, 1.0])
    # u = c * sigma_h^T Sigma^-1 (x - mu) = 0.5 * 2 = 1; w = 1 + (1+1)*1 = 3
    w = nonlinear_weight(X_i, x, np.zeros(2), links,
                         SeparableFlavor(0.5, "h"), sigma_h=sigma_h,
                         sigma_inv=sigma_inv)
    np.testing.assert_allclose(w, 3.0)


def test_empirical_weight_centering(rng):
    # With mu_hat the sample mean, the average in-sample weight is exactly 1.
    X = rng.normal(size=(60, 2))
    mu_hat = X.mean(axis=0)
    sigma_inv = np.linalg.inv(np.cov(X.T, bias=True))
    links = _quadratic_links(2)
    for _ in range(10):
        x = rng.normal(size=2)
        lw = linear_weight(X, x, mu_hat, sigma_inv)
        assert abs(lw.mean() - 1.0) <= 1e-12
        nw = nonlinear_weight(X, x, mu_hat, links, NonlinearFlavor([0.8, -0.2]))
        assert abs(nw.mean() - 1.0) <= 1e-12
        sw = nonlinear_weight(X, x, mu_hat, links,
                              SeparableFlavor(0.7, "h"),
                              sigma_h=np.array([0.5, 0.1]), sigma_inv=sigma_inv)
        assert abs(sw.mean() - 1.0) <= 1e-12


def test_weights_affine_in_covariate(rng):
    links = _quadratic_links(2)
    flavor = NonlinearFlavor([1.0, 0.5])
    mu = rng.normal(size=2)
    sigma_inv = np.eye(2) + 0.1
    for _ in range(10):
        x = rng.normal(size=2)
        x1, x2 = rng.normal(size=2), rng.normal(size=2)
        lam = rng.uniform()
        mix = lam * x1 + (1 - lam) * x2
        for fn in (
            lambda xi: linear_weight(xi, x, mu, sigma_inv),
            lambda xi: nonlinear_weight(xi, x, mu, links, flavor),
        ):
            lhs = fn(mix)
            rhs = lam * fn(x1) + (1 - lam) * fn(x2)
            assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


# ---------------------------------------------------------------------------
# The linear-reducing links
# ---------------------------------------------------------------------------

def test_lfr_reduction_p1():
    # p=1: f1 collapses to v (x - mu), reproducing 1 + (X-mu) v (x-mu).
    mu = np.array([0.5])
    sigma_inv = np.array([[2.0]])
    sigma = np.array([3.0])
    links = lfr_reducing_links(mu, sigma_inv, sigma)
    beta = sigma_inv @ sigma
    for X_i, x in [(0.0, 1.0), (2.0, -1.0), (0.5, 0.5)]:
        got = nonlinear_weight(np.array([X_i]), np.array([x]), mu, links,
                               NonlinearFlavor(beta))
        want = linear_weight(np.array([X_i]), np.array([x]), mu, sigma_inv)
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_lfr_reduction_random_p2(rng):
    mu = rng.normal(size=2)
    a = rng.standard_normal((2, 2))
    sigma_mat = a @ a.T + np.eye(2)
    sigma_inv = np.linalg.inv(sigma_mat)
    sigma = rng.normal(size=2)
    sigma[sigma == 0] = 0.5
    links = lfr_reducing_links(mu, sigma_inv, sigma)
    beta = sigma_inv @ sigma
    worst = 0.0
    for _ in range(50):
        X_i, x = rng.normal(size=2), rng.normal(size=2)
        got = nonlinear_weight(X_i, x, mu, links, NonlinearFlavor(beta))
        want = linear_weight(X_i, x, mu, sigma_inv)
        worst = max(worst, abs(got - want))
    assert worst <= 1e-10


def test_lfr_reduction_center():
    links = lfr_reducing_links(np.zeros(2), np.eye(2), np.ones(2))
    w = nonlinear_weight(np.array([1.0, 2.0]), np.zeros(2), np.zeros(2), links,
                         NonlinearFlavor(np.ones(2)))
    np.testing.assert_allclose(w, 1.0)


def test_lfr_reduction_degenerate_sigma():
    with pytest.raises(DegenerateSigma):
        lfr_reducing_links(np.zeros(2), np.eye(2), np.array([1.0, 0.0]))


# ---------------------------------------------------------------------------
# Registry and serialization
# ---------------------------------------------------------------------------

def test_generalized_linear_links_descriptor_roundtrip():
    links = generalized_linear_links(
        [{"base": "identity", "scale": 2.0, "offset": -1.0},
         {"base": "exp", "scale": 0.5}]
    )
    rebuilt = link_spec_from_descriptor(links.descriptor)
    u = np.linspace(-1, 1, 7)
    np.testing.assert_allclose(rebuilt.eval_index(u), links.eval_index(u))


def test_link_pickle_roundtrip():
    links = lfr_reducing_links(np.zeros(2), np.eye(2), np.ones(2))
    clone = pickle.loads(pickle.dumps(links))
    X = np.array([[0.3, -0.2]])
    beta = np.array([1.0, 1.0])
    np.testing.assert_allclose(clone.eval_general(X, beta),
                               links.eval_general(X, beta))


def test_opaque_links_do_not_pickle():
    links = LinkSpec(GENERALIZED_LINEAR, 1, 1, (lambda u: u,))
    with pytest.raises(TypeError):
        pickle.dumps(links)


def test_unknown_family_and_base():
    with pytest.raises(SpecMismatch):
        link_spec_from_descriptor({"family": "nope"})
    with pytest.raises(SpecMismatch):
        generalized_linear_links([{"base": "cube"}])


def test_link_spec_wrong_count():
    with pytest.raises(SpecMismatch):
        LinkSpec(GENERALIZED_LINEAR, 2, 2, (lambda u: u,))
